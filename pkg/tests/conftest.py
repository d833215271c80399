"""Shared fixtures.

The expensive objects (reference solve, desk surrogate, paired sample
sweeps) are session scoped so the acceptance tests and the module tests
reuse one computation.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from tokamak_uq.config import load_config
from tokamak_uq.geometry import Coil, ReactorGeometry
from tokamak_uq.pipeline import (DirectEvaluator, SurrogateEvaluator,
                                 mesh_digest, surrogate_node_function)
from tokamak_uq.sparsegrid import build_surrogate
from tokamak_uq.uq import NoiseModel, sample_currents, sample_rng

DATA = Path(__file__).resolve().parent.parent / "src" / "tokamak_uq" / "data"


@pytest.fixture(scope="session")
def desk_cfg():
    return load_config(DATA / "desk.json")


@pytest.fixture(scope="session")
def geom(desk_cfg):
    return desk_cfg.geometry()


@pytest.fixture(scope="session")
def coarse(desk_cfg):
    return desk_cfg.mesh()


@pytest.fixture(scope="session")
def desk_evaluator(desk_cfg, geom, coarse):
    return DirectEvaluator(geom, coarse, desk_cfg.profile, desk_cfg.solver,
                           R=desk_cfg.refinements)


@pytest.fixture(scope="session")
def reference_solution(desk_cfg, desk_evaluator):
    sol = desk_evaluator.solve(desk_cfg.current_vector())
    assert sol.converged, "reference solve must converge for dependent tests"
    return sol


@pytest.fixture(scope="session")
def desk_noise(desk_cfg):
    return NoiseModel(reference=desk_cfg.current_vector(),
                      fraction=desk_cfg.noise_fraction,
                      vary=desk_cfg.vary_coils)


@pytest.fixture(scope="session")
def desk_surrogate(desk_cfg, desk_evaluator, desk_noise):
    fn = surrogate_node_function(desk_evaluator, desk_noise)
    return build_surrogate(fn, d=desk_noise.d, level=2, box=desk_noise.box,
                           mesh_digest=mesh_digest(desk_evaluator.sub))


@pytest.fixture(scope="session")
def desk_surrogate_evaluator(desk_surrogate, desk_cfg, geom, desk_evaluator):
    return SurrogateEvaluator(desk_surrogate, desk_cfg.vary_coils, geom,
                              desk_evaluator.common)


@pytest.fixture(scope="session")
def paired_samples(desk_cfg, desk_noise, desk_evaluator,
                   desk_surrogate_evaluator):
    """50 perturbed currents evaluated by both evaluators, with timings."""
    direct, surrogate = [], []
    t_direct = t_surrogate = 0.0
    for j in range(50):
        I = sample_currents(desk_noise, sample_rng(desk_cfg.seed, j))
        t0 = time.perf_counter()
        direct.append(desk_evaluator(I))
        t1 = time.perf_counter()
        surrogate.append(desk_surrogate_evaluator(I))
        t2 = time.perf_counter()
        t_direct += t1 - t0
        t_surrogate += t2 - t1
    return {"direct": direct, "surrogate": surrogate,
            "seconds_direct": t_direct / 50.0,
            "seconds_surrogate": t_surrogate / 50.0}


def make_box_geometry(xlim=(1.0, 9.0), ylim=(-4.0, 4.0)):
    """Toy geometry whose limiter is a rectangle inside the given box.

    Meant for analyzing constructed fields on structured meshes; the
    limiter sits well inside the box so every probe point is locatable.
    """
    x0, x1 = xlim
    y0, y1 = ylim
    mx, my = 0.12 * (x1 - x0), 0.12 * (y1 - y0)
    lim = np.array([[x0 + mx, y0 + my], [x1 - mx, y0 + my],
                    [x1 - mx, y1 - my], [x0 + mx, y1 - my]])
    outer = np.array([[x0 + 0.4 * mx, y0 + 0.4 * my],
                      [x1 - 0.4 * mx, y0 + 0.4 * my],
                      [x1 - 0.4 * mx, y1 - 0.4 * my],
                      [x0 + 0.4 * mx, y1 - 0.4 * my]])
    plate = np.array([[x0 + 2 * mx, y0 + 1.2 * my],
                      [x1 - 2 * mx, y0 + 1.2 * my]])
    rho = 4.0 * float(max(np.hypot(*outer.T).max(), 1.0))
    return ReactorGeometry(coils=(), limiter=lim, divertor=(plate,),
                           vessel_outer=outer, gamma_radius=rho)


@pytest.fixture
def box_geometry():
    return make_box_geometry()


def unit_coil(coil_id=0, center=(2.0, 0.0), current=1.0):
    return Coil(coil_id=coil_id, center=center, width=1.0, height=1.0,
                reference_current=current)
