"""Free-boundary equilibrium solver on the bounded half-disk domain.

The discrete operator is the P1 stiffness matrix with coefficient 1/(mu x)
plus the dense boundary coupling on Gamma, with homogeneous Dirichlet rows on
the symmetry axis. The nonlinearity of the plasma source is handled by damped
fixed-point iteration inside an adaptive refinement loop: each mesh level
factorizes its operator once, iterates to the level tolerance, then refines
the triangles hugging the current separatrix and carries the field over.

Failures are diagnosed, not raised: a lost confinement region, a divergent
update history, or an exhausted iteration budget are all reported on the
returned solution object so campaign drivers can count them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dfield
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .fields import FieldAnalysis, FieldAnalyzer
from .geometry import CurrentVector, ReactorGeometry, coil_current_density
from .kernels import assemble_boundary
from .mesh import (NodalField, QUAD_BARY, QUAD_W, TriMesh, carry_field,
                   mark_near_separatrix, refine_marked)


class SolverError(ValueError):
    pass


# ---------------------------------------------------------------------------
# parameter and result containers

@dataclass(frozen=True)
class ProfileParams:
    """Luxon-Brown profile constants plus the physical scales."""

    lambda_s: float
    x0: float
    alpha_p: float = 2.0
    gamma_p: float = 1.5
    beta_p: float = 0.5
    mu0: float = 4.0e-7 * math.pi

    def __post_init__(self):
        if not self.alpha_p > 0.0:
            raise SolverError("alpha_p must be positive")
        if not self.gamma_p > 0.0:
            raise SolverError("gamma_p must be positive")
        if not 0.0 <= self.beta_p <= 1.0:
            raise SolverError("beta_p must lie in [0, 1]")
        if not self.x0 > 0.0:
            raise SolverError("x0 must be positive")
        if not self.mu0 > 0.0:
            raise SolverError("mu0 must be positive")


@dataclass
class PlasmaState:
    psi_ma: float
    psi_bd: float
    axis: np.ndarray
    boundary_type: str
    plasma_triangles: np.ndarray
    xpoint: Optional[np.ndarray] = None
    contact_point: Optional[np.ndarray] = None

    @property
    def confined(self) -> bool:
        return (self.boundary_type != "no_confinement"
                and np.isfinite(self.psi_bd)
                and self.psi_bd != self.psi_ma)


@dataclass(frozen=True)
class SolverOptions:
    theta: float = 0.7
    max_iter: int = 50
    tol_override: Optional[float] = None
    marking_alpha: float = 0.05
    guess_center: Optional[tuple] = None
    guess_a: Optional[float] = None
    guess_b: Optional[float] = None
    guess_k: float = 0.0
    initial_field: Optional[NodalField] = None

    def __post_init__(self):
        if not 0.0 < self.theta <= 1.0:
            raise SolverError("theta must lie in (0, 1]")
        if self.max_iter < 1:
            raise SolverError("max_iter must be at least 1")


@dataclass
class EquilibriumSolution:
    field: NodalField
    state: Optional[PlasmaState]
    iterations: list
    residual_history: list          # one list of update norms per level
    mesh_sequence: list
    converged: bool
    failure: Optional[str] = None   # no_confinement | max_iter | diverged
    analysis: Optional[FieldAnalysis] = None


def tolerance_schedule(R: int, override: Optional[float] = None) -> list:
    if R < 0:
        raise SolverError("refinement count must be nonnegative")
    if override is not None:
        return [float(override)] * (R + 1)
    return [10.0 ** (-11.0 * (i + 1) / (R + 1)) for i in range(R + 1)]


# ---------------------------------------------------------------------------
# assembly

def assemble_interior(mesh: TriMesh, mu: float) -> sp.csr_matrix:
    """P1 stiffness matrix of -div((1/(mu x)) grad), axis rows as identity.

    The 1/(mu x) coefficient is integrated with the degree-2 barycentric rule,
    which keeps every evaluation point strictly off the axis.
    """
    if mu <= 0.0:
        raise SolverError("mu must be positive")
    t = mesh.triangles
    p = mesh.vertices[t]
    areas = mesh.areas
    xq = QUAD_BARY @ p[:, :, 0].T                     # (3, T)
    off_axis = ~mesh.axis_flag[t].all(axis=1)
    if np.any(xq[:, off_axis] <= 0.0):
        raise SolverError("quadrature point left of the axis in a non-axis triangle")
    if np.any(xq <= 0.0):
        raise SolverError("triangle degenerated onto the axis")
    coeff = np.sum(QUAD_W[:, None] / xq, axis=0) / mu  # sum_q w_q / (mu x_q)

    b = np.stack([p[:, 1, 1] - p[:, 2, 1],
                  p[:, 2, 1] - p[:, 0, 1],
                  p[:, 0, 1] - p[:, 1, 1]], axis=1)
    c = np.stack([p[:, 2, 0] - p[:, 1, 0],
                  p[:, 0, 0] - p[:, 2, 0],
                  p[:, 1, 0] - p[:, 0, 0]], axis=1)
    scale = coeff / (4.0 * areas)
    local = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :])
    local = local * scale[:, None, None]

    rows = np.repeat(t, 3, axis=1).ravel()
    cols = np.tile(t, (1, 3)).ravel()
    vals = local.reshape(len(t), 9).ravel()

    # Dirichlet on the axis: drop coupled entries, put ones on the diagonal
    ax = mesh.axis_flag
    keep = ~(ax[rows] | ax[cols])
    rows, cols, vals = rows[keep], cols[keep], vals[keep]
    diag = np.flatnonzero(ax)
    rows = np.concatenate([rows, diag])
    cols = np.concatenate([cols, diag])
    vals = np.concatenate([vals, np.ones(len(diag))])
    A = sp.coo_matrix((vals, (rows, cols)),
                      shape=(mesh.n_vertices, mesh.n_vertices))
    return A.tocsr()


def coil_load_matrix(mesh: TriMesh, n_coils: int) -> np.ndarray:
    """(V, n_coils) map from coil current densities to nodal loads."""
    C = np.zeros((mesh.n_vertices, n_coils))
    share = mesh.areas / 3.0
    for j in range(n_coils):
        sel = mesh.region_coil == j
        if not sel.any():
            continue
        tj = mesh.triangles[sel]
        sj = share[sel]
        for k in range(3):
            np.add.at(C[:, j], tj[:, k], sj)
    return C


def _profile_factor(psin: np.ndarray, p: ProfileParams) -> np.ndarray:
    # clipping guards quadrature points that interpolate marginally past the
    # axis or boundary values
    z = np.clip(psin, 0.0, 1.0)
    return (1.0 - z ** p.alpha_p) ** p.gamma_p


def plasma_source(f: NodalField, s: Optional[PlasmaState], p: ProfileParams,
                  geometry: Optional[ReactorGeometry] = None,
                  currents=None) -> np.ndarray:
    """Nodal load vector of the current sources at quadrature degree 2.

    The plasma term is integrated over the state's plasma triangles; passing
    a geometry and a current vector adds the coil terms. Axis entries stay
    zero to match the Dirichlet rows.
    """
    mesh = f.mesh
    load = np.zeros(mesh.n_vertices)

    if s is not None and len(s.plasma_triangles) > 0 and p.lambda_s != 0.0:
        if s.psi_ma == s.psi_bd:
            raise SolverError("degenerate normalization: psi_ma equals psi_bd")
        tids = np.asarray(s.plasma_triangles, dtype=np.int64)
        t = mesh.triangles[tids]
        pv = mesh.vertices[t]
        # profile argument runs 0 at the magnetic axis to 1 at the boundary,
        # so the current density peaks on axis and vanishes at the separatrix
        uv = (f.values[t] - s.psi_ma) / (s.psi_bd - s.psi_ma)
        areas = mesh.areas[tids]
        xq = QUAD_BARY @ pv[:, :, 0].T                # (3, T_p)
        psinq = QUAD_BARY @ uv.T
        dens = p.lambda_s * (p.beta_p * xq / p.x0
                             + (1.0 - p.beta_p) * p.x0 / xq) * _profile_factor(psinq, p)
        for q in range(3):
            wq = areas * QUAD_W[q] * dens[q]
            for k in range(3):
                np.add.at(load, t[:, k], wq * QUAD_BARY[q, k])

    if geometry is not None and currents is not None:
        dens_c = coil_current_density(geometry, currents)
        share = mesh.areas / 3.0
        for j in range(len(dens_c)):
            sel = mesh.region_coil == j
            if not sel.any():
                continue
            tj = mesh.triangles[sel]
            sj = share[sel] * dens_c[j]
            for k in range(3):
                np.add.at(load, tj[:, k], sj)

    load[mesh.axis_flag] = 0.0
    return load


def total_plasma_current(f: NodalField, s: PlasmaState, p: ProfileParams) -> float:
    """Integral of the plasma current density over the plasma region."""
    if len(s.plasma_triangles) == 0:
        return 0.0
    mesh = f.mesh
    tids = np.asarray(s.plasma_triangles, dtype=np.int64)
    t = mesh.triangles[tids]
    pv = mesh.vertices[t]
    uv = (f.values[t] - s.psi_ma) / (s.psi_bd - s.psi_ma)
    xq = QUAD_BARY @ pv[:, :, 0].T
    psinq = QUAD_BARY @ uv.T
    dens = p.lambda_s * (p.beta_p * xq / p.x0
                         + (1.0 - p.beta_p) * p.x0 / xq) * _profile_factor(psinq, p)
    return float(np.sum(mesh.areas[tids] * np.sum(QUAD_W[:, None] * dens, axis=0)))


def initial_guess(mesh: TriMesh, center, a: float, b: float,
                  K: float = 0.0) -> NodalField:
    """Downward elliptic paraboloid peaking at the requested center."""
    if a == 0.0 or b == 0.0:
        raise SolverError("ellipse semi-axes must be nonzero")
    cx, cy = float(center[0]), float(center[1])
    x, y = mesh.vertices[:, 0], mesh.vertices[:, 1]
    vals = -(((x - cx) / a) ** 2 + ((y - cy) / b) ** 2 + K)
    vals[mesh.axis_flag] = 0.0
    return NodalField(mesh, vals)


# ---------------------------------------------------------------------------
# the nonlinear free-boundary loop

def _to_state(analysis: FieldAnalysis) -> PlasmaState:
    crit, cls = analysis.crit, analysis.boundary
    return PlasmaState(
        psi_ma=crit.axis_value,
        psi_bd=cls.psi_bd if cls.psi_bd is not None else float("nan"),
        axis=crit.axis_point,
        boundary_type=cls.kind,
        plasma_triangles=analysis.plasma_tris,
        xpoint=cls.xpoint,
        contact_point=cls.contact_point,
    )


def _default_guess(g: ReactorGeometry, opts: SolverOptions):
    lim = g.limiter
    x0, x1 = float(lim[:, 0].min()), float(lim[:, 0].max())
    y0, y1 = float(lim[:, 1].min()), float(lim[:, 1].max())
    center = opts.guess_center or (0.5 * (x0 + x1), 0.5 * (y0 + y1))
    a = opts.guess_a if opts.guess_a is not None else 0.6 * 0.5 * (x1 - x0)
    b = opts.guess_b if opts.guess_b is not None else 0.6 * 0.5 * (y1 - y0)
    return center, a, b


def build_operator(mesh: TriMesh, g: ReactorGeometry, mu0: float,
                   boundary_op=None):
    """Interior stiffness plus the scaled Gamma coupling, ready to factorize."""
    K = assemble_interior(mesh, mu0)
    if boundary_op is None:
        boundary_op = assemble_boundary(mesh, g.gamma_radius)
    ids = boundary_op.vertex_ids
    Bd = boundary_op.matrix.copy()
    # the two Gamma poles sit on the axis and stay Dirichlet rows
    drop = mesh.axis_flag[ids]
    Bd[drop, :] = 0.0
    Bd[:, drop] = 0.0
    ii, jj = np.nonzero(Bd)
    B = sp.coo_matrix((Bd[ii, jj], (ids[ii], ids[jj])),
                      shape=(mesh.n_vertices, mesh.n_vertices))
    A = (K + (1.0 / mu0) * B.tocsr()).tocsc()
    return A, boundary_op


def solve_free_boundary(g: ReactorGeometry, coarse: TriMesh, I,
                        p: ProfileParams, R: int = 0,
                        opts: SolverOptions = SolverOptions()) -> EquilibriumSolution:
    """Damped Picard iteration nested in R adaptive refinement passes."""
    if not isinstance(I, CurrentVector):
        I = CurrentVector(np.asarray(I, dtype=float))
    if len(I) != len(g.coils):
        raise SolverError("current vector length does not match the coil count")
    tols = tolerance_schedule(R, opts.tol_override)
    # the linear problem hits its fixed point in one undamped step
    theta = 1.0 if p.lambda_s == 0.0 else opts.theta

    mesh = coarse
    if opts.initial_field is not None:
        if opts.initial_field.mesh is not mesh:
            raise SolverError("initial field must live on the coarse mesh")
        field = opts.initial_field.copy()
    else:
        center, a, b = _default_guess(g, opts)
        field = initial_guess(mesh, center, a, b, opts.guess_k)

    iterations = []
    residual_history = []
    mesh_sequence = [mesh]
    boundary_op = None
    failure = None
    analysis = None
    converged_level = False

    for level in range(R + 1):
        analyzer = FieldAnalyzer(mesh, g)
        A, boundary_op = build_operator(mesh, g, p.mu0, boundary_op)
        lu = splu(A)
        analysis = analyzer.analyze(field)
        state = _to_state(analysis)

        resids = []
        converged_level = False
        n_up = 0
        prev = None
        it = 0
        while it < opts.max_iter:
            it += 1
            rhs = plasma_source(field, state if state.confined else None,
                                p, g, I)
            psi_new = lu.solve(rhs)
            diff = float(np.abs(psi_new - field.values).max())
            denom = float(np.abs(psi_new).max())
            update = 0.0 if diff == 0.0 else (math.inf if denom == 0.0
                                              else diff / denom)
            resids.append(update)
            field = NodalField(mesh, theta * psi_new + (1.0 - theta) * field.values)
            analysis = analyzer.analyze(field)
            state = _to_state(analysis)
            if update <= tols[level]:
                converged_level = True
                break
            if prev is not None and update > prev:
                n_up += 1
                if n_up >= 3:
                    failure = "diverged"
                    break
            else:
                n_up = 0
            prev = update
        iterations.append(it)
        residual_history.append(resids)
        if failure == "diverged":
            break
        if not converged_level:
            failure = "max_iter"
            break

        if level < R:
            new_mesh = mesh
            if state.confined and state.psi_bd != 0.0:
                marked = mark_near_separatrix(field, state.psi_bd,
                                              opts.marking_alpha)
                new_mesh = refine_marked(mesh, marked)
            if new_mesh is not mesh:
                field = carry_field(field, new_mesh)
                mesh = new_mesh
                mesh_sequence.append(mesh)
                old_ids = boundary_op.vertex_ids
                if not np.array_equal(np.flatnonzero(mesh.gamma_flag), old_ids):
                    boundary_op = None   # Gamma was touched; reassemble

    if failure is None and not state.confined:
        failure = "no_confinement"

    return EquilibriumSolution(
        field=field,
        state=state,
        iterations=iterations,
        residual_history=residual_history,
        mesh_sequence=mesh_sequence,
        converged=converged_level and failure is None,
        failure=failure,
        analysis=analysis,
    )
