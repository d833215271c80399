"""Evaluator plumbing: solves and surrogates exposed as current -> sample maps.

The surrogate and every campaign statistic live on one fixed "common mesh",
the coarse mesh with its vessel interior uniformly refined R times. Monitored
vectors hold the flux at the vessel vertices of that mesh; feature extraction
for surrogate fields runs on the vessel submesh, which carries the whole
plasma and both divertor plates.
"""

from __future__ import annotations

import hashlib

import numpy as np

from .fields import FieldAnalyzer, feature_record
from .geometry import CurrentVector, ReactorGeometry
from .mesh import (NodalField, R_CHAMBER, TriMesh, L2Projector, submesh,
                   uniform_refine_interior)
from .solver import ProfileParams, SolverOptions, solve_free_boundary
from .sparsegrid import Surrogate, eval_surrogate
from .uq import EvalSample


def mesh_digest(mesh: TriMesh) -> str:
    """Content hash of the node/element arrays, for surrogate headers."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(mesh.vertices, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(mesh.triangles, dtype="<i8").tobytes())
    return h.hexdigest()


def common_mesh(coarse: TriMesh, R: int) -> TriMesh:
    """The shared campaign mesh: vessel interior refined R times."""
    return uniform_refine_interior(coarse, R)


def vessel_restriction(common: TriMesh):
    """(vessel submesh, parent vertex ids) of the common mesh."""
    return submesh(common, np.flatnonzero(common.region_kind == R_CHAMBER))


def sample_from_record(rec, psi) -> EvalSample:
    """EvalSample from a flattened feature record plus a monitored vector."""
    xp = None
    if np.isfinite(rec.xpoint_x):
        xp = np.array([rec.xpoint_x, rec.xpoint_y])
    ax = None
    if np.isfinite(rec.axis_x):
        ax = np.array([rec.axis_x, rec.axis_y])
    st = None
    if rec.n_strike >= 2 and np.isfinite(rec.strike2_x):
        st = np.array([rec.strike1_x, rec.strike1_y,
                       rec.strike2_x, rec.strike2_y])
    sh = None
    if np.isfinite(rec.r_geo):
        sh = np.array([rec.r_geo, rec.a_minor, rec.eps, rec.kappa_e,
                       rec.delta_u, rec.delta_l])
    return EvalSample(kind=rec.boundary_type, psi=psi, xpoint=xp, axis=ax,
                      strikes=st, shaping=sh)


class DirectEvaluator:
    """Full free-boundary solve per current vector."""

    def __init__(self, geom: ReactorGeometry, coarse: TriMesh,
                 profile: ProfileParams, opts: SolverOptions, R: int = 0,
                 common: TriMesh | None = None):
        self.geom = geom
        self.coarse = coarse
        self.profile = profile
        self.opts = opts
        self.R = R
        self.common = common if common is not None else common_mesh(coarse, R)
        self.sub, self.vessel_ids = vessel_restriction(self.common)
        self._projector = None

    def restrict(self, field: NodalField) -> np.ndarray:
        """Monitored vector: flux at the common mesh's vessel vertices."""
        if field.mesh is self.common:
            return field.values[self.vessel_ids].copy()
        if self._projector is None:
            self._projector = L2Projector(self.common)
        proj, _ = self._projector.project(field)
        return proj.values[self.vessel_ids].copy()

    def solve(self, I: CurrentVector):
        return solve_free_boundary(self.geom, self.coarse, I, self.profile,
                                   R=self.R, opts=self.opts)

    def field_vector(self, I: CurrentVector) -> np.ndarray | None:
        """Monitored vector for a converged solve, None otherwise."""
        sol = self.solve(I)
        if not sol.converged:
            return None
        return self.restrict(sol.field)

    def __call__(self, I: CurrentVector) -> EvalSample:
        sol = self.solve(I)
        if not sol.converged or not sol.state.confined:
            kind = sol.failure or sol.state.boundary_type
            return EvalSample(kind=kind, psi=None)
        rec = feature_record(sol.field, self.geom, sol.analysis)
        return sample_from_record(rec, self.restrict(sol.field))


class SurrogateEvaluator:
    """Interpolated flux field per current vector, features re-extracted."""

    def __init__(self, s: Surrogate, vary, geom: ReactorGeometry,
                 common: TriMesh):
        self.surrogate = s
        self.vary = list(vary)
        if len(self.vary) != s.d:
            raise ValueError("varied coil count does not match surrogate dimension")
        self.geom = geom
        self.sub, self.vessel_ids = vessel_restriction(common)
        if s.vector_length != self.sub.n_vertices:
            raise ValueError("surrogate vector length does not match the "
                             "common mesh vessel")
        self.analyzer = FieldAnalyzer(self.sub, geom)

    def __call__(self, I: CurrentVector) -> EvalSample:
        point = np.asarray(I.values, dtype=float)[self.vary]
        psi = eval_surrogate(self.surrogate, point)
        f = NodalField(self.sub, psi)
        rec = feature_record(f, self.geom, self.analyzer.analyze(f))
        return sample_from_record(rec, psi)

    def field_only(self, I: CurrentVector) -> np.ndarray:
        """Skip feature extraction; used for timing and error sweeps."""
        return eval_surrogate(self.surrogate,
                              np.asarray(I.values, dtype=float)[self.vary])


def surrogate_node_function(ev: DirectEvaluator, noise_model):
    """Map a point in the varied-current box to the monitored flux vector.

    Returns None for points whose solve does not converge so the grid
    builder can fall back to its nearest successful neighbour.
    """
    def fn(point):
        return ev.field_vector(noise_model.embed(point))
    return fn
