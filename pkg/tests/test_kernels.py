import math

import mpmath
import numpy as np
import pytest

from tokamak_uq.kernels import (BoundaryOperator, assemble_boundary, kernel_M,
                                kernel_N)
from tokamak_uq.solver import assemble_interior
from tokamak_uq.mesh import structured_rectangle_mesh


def mp_M(p1, p2):
    """Kernel M re-derived at 40 digits from the elliptic integrals."""
    with mpmath.workdps(40):
        x1, y1 = mpmath.mpf(p1[0]), mpmath.mpf(p1[1])
        x2, y2 = mpmath.mpf(p2[0]), mpmath.mpf(p2[1])
        k2 = 4 * x1 * x2 / ((x1 + x2) ** 2 + (y1 - y2) ** 2)
        k = mpmath.sqrt(k2)
        K = mpmath.ellipk(k2)    # mpmath uses the parameter m = k^2
        E = mpmath.ellipe(k2)
        val = k / (2 * mpmath.pi * (x1 * x2) ** mpmath.mpf("1.5")) * (
            (2 - k2) / (2 - 2 * k2) * E - K)
        return float(val)


def test_kernel_N_on_equator():
    # at (rho, 0): d+ = d- = rho sqrt(2), so N = (2/sqrt(2) - 1)/rho^2
    for rho in (1.0, 3.0, 14.5):
        want = (math.sqrt(2.0) - 1.0) / rho**2
        assert kernel_N((rho, 0.0), rho) == pytest.approx(want, rel=1e-14)


def test_kernel_N_scaling():
    # N(s x; s rho) = N(x; rho) / s^2
    p = (2.2, -1.3)
    base = kernel_N(p, 3.0)
    for s in (2.0, 7.5):
        scaled = kernel_N((s * p[0], s * p[1]), s * 3.0)
        assert scaled == pytest.approx(base / s**2, rel=1e-13)


def test_kernel_N_rejects_left_half_plane():
    with pytest.raises(ValueError):
        kernel_N((0.0, 1.0), 14.5)
    with pytest.raises(ValueError):
        kernel_N((1.0, 1.0), -1.0)


def test_kernel_M_modulus_example():
    # kap^2((1,0),(1,2)) = 4 / (4 + 4) = 1/2
    k2 = 4.0 * 1 * 1 / ((1 + 1) ** 2 + (0 - 2) ** 2)
    assert math.sqrt(k2) == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-15)


@pytest.mark.parametrize("p1,p2", [
    ((2.0, 0.0), (3.0, 1.0)),
    ((1.0, 0.0), (1.0, 2.0)),
    ((5.5, -2.0), (0.5, 4.0)),
    ((14.5, 0.0), (14.4, 0.5)),
])
def test_kernel_M_against_mpmath(p1, p2):
    assert kernel_M(p1, p2) == pytest.approx(mp_M(p1, p2), rel=1e-12)


def test_kernel_M_symmetric_positive():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p1 = (float(rng.uniform(0.5, 14.0)), float(rng.uniform(-14, 14)))
        p2 = (float(rng.uniform(0.5, 14.0)), float(rng.uniform(-14, 14)))
        if p1 == p2:
            continue
        a, b = kernel_M(p1, p2), kernel_M(p2, p1)
        assert a == pytest.approx(b, rel=1e-14)
        assert a > 0.0


def test_kernel_M_singular_rejected():
    with pytest.raises(ValueError):
        kernel_M((2.0, 1.0), (2.0, 1.0))
    with pytest.raises(ValueError):
        kernel_M((-1.0, 0.0), (2.0, 1.0))


# ---------------------------------------------------------------- assembly


def test_interior_rows_sum_zero_off_axis():
    m = structured_rectangle_mesh(1.0, 2.0, 0.0, 1.0, 6, 6)
    A = assemble_interior(m, 1.0).toarray()
    sums = A @ np.ones(m.n_vertices)
    assert np.max(np.abs(sums)) < 1e-12 * np.max(np.abs(A))


def test_interior_spd_after_dirichlet():
    m = structured_rectangle_mesh(1.0, 2.0, 0.0, 1.0, 6, 6)
    A = assemble_interior(m, 1.0).toarray()
    assert np.max(np.abs(A - A.T)) == 0.0
    v = m.vertices
    bnd = ((v[:, 0] == 1.0) | (v[:, 0] == 2.0)
           | (v[:, 1] == 0.0) | (v[:, 1] == 1.0))
    keep = ~bnd
    w = np.linalg.eigvalsh(A[np.ix_(keep, keep)])
    assert w.min() > 0.0


@pytest.fixture(scope="module")
def boundary_op(coarse):
    return assemble_boundary(coarse, 14.5)


def test_boundary_operator_shape(boundary_op, coarse):
    n = len(boundary_op.vertex_ids)
    assert n == int(np.count_nonzero(coarse.gamma_flag))
    assert boundary_op.n_block.shape == (n, n)
    assert boundary_op.m_block.shape == (n, n)
    assert boundary_op.matrix.shape == (n, n)


def test_boundary_blocks_symmetric(boundary_op):
    bn, bm = boundary_op.n_block, boundary_op.m_block
    assert np.max(np.abs(bn - bn.T)) <= 1e-13 * np.max(np.abs(bn))
    assert np.max(np.abs(bm - bm.T)) == 0.0    # bitwise symmetrised


def test_m_block_annihilates_constants(boundary_op):
    bm = boundary_op.m_block
    ones = np.ones(bm.shape[0])
    scale = np.max(np.abs(bm))
    assert np.max(np.abs(bm @ ones)) <= 8 * np.finfo(float).eps * scale
    for i in range(bm.shape[0]):
        row = bm[i]
        assert abs(math.fsum(row.tolist())) <= 0.5 * math.ulp(abs(bm[i, i]))


def test_n_block_positive_semidefinite(boundary_op):
    w = np.linalg.eigvalsh(0.5 * (boundary_op.n_block + boundary_op.n_block.T))
    assert w.min() > -1e-12 * max(abs(w.max()), 1.0)


def test_quadrature_refinement_converges(coarse):
    base = assemble_boundary(coarse, 14.5, n_gauss=4, n_sing=24)
    fine = assemble_boundary(coarse, 14.5, n_gauss=8, n_sing=48)
    num = np.max(np.abs(fine.matrix - base.matrix))
    den = np.max(np.abs(fine.matrix))
    assert num / den < 1e-6


def test_assembly_validation(coarse):
    with pytest.raises(ValueError):
        assemble_boundary(coarse, -1.0)
    from tokamak_uq.mesh import MeshError, structured_rectangle_mesh
    no_gamma = structured_rectangle_mesh(1.0, 2.0, 0.0, 1.0, 3, 3)
    with pytest.raises(MeshError):
        assemble_boundary(no_gamma, 14.5)
