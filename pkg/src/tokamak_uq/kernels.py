"""Boundary-integral kernels on the circular coupling boundary.

The far-field condition on the artificial circle of radius rho enters the
weak form through a local coefficient

    N(x) = (1/x1) * (1/d+ + 1/d- - 1/rho),   d+- = sqrt(x1^2 + (rho +- y1)^2)

and a symmetric double-layer kernel acting on differences,

    M(x, y) = kap / (2 pi (x1 y1)^{3/2}) * ((2 - kap^2)/(2 - 2 kap^2) E(kap) - K(kap))

with kap^2 = 4 x1 y1 / ((x1 + y1)^2 + (x2 - y2)^2), evaluated between points
x = (x1, x2), y = (y1, y2). M is positive and blows up like 1/dist^2 on the
diagonal; it always appears against the product of two first-order
differences, which tames the singularity to an integrable one.

Assembly treats edge pairs by separation: plain tensor Gauss for disjoint
pairs, a Duffy split for pairs sharing a vertex, and a graded substitution
w = u^3 on the diagonal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .elliptic import elliptic_KE_vec
from .mesh import TriMesh, MeshError


def kernel_N(p, rho: float) -> float:
    x, y = float(p[0]), float(p[1])
    if x <= 0.0:
        raise ValueError(f"kernel N undefined at x = {x!r} (needs x > 0)")
    if rho <= 0.0:
        raise ValueError("rho must be positive")
    dp = math.hypot(x, rho + y)
    dm = math.hypot(x, rho - y)
    return (1.0 / x) * (1.0 / dp + 1.0 / dm - 1.0 / rho)


def kernel_M(p1, p2) -> float:
    x1, y1 = float(p1[0]), float(p1[1])
    x2, y2 = float(p2[0]), float(p2[1])
    if x1 <= 0.0 or x2 <= 0.0:
        raise ValueError("kernel M needs x components > 0")
    if x1 == x2 and y1 == y2:
        raise ValueError("kernel M is singular at coincident points")
    return float(_M_vec(np.array([x1]), np.array([y1]),
                        np.array([x2]), np.array([y2]))[0])


def _M_vec(x1, y1, x2, y2):
    k2 = 4.0 * x1 * x2 / ((x1 + x2) ** 2 + (y1 - y2) ** 2)
    k = np.sqrt(np.minimum(k2, 1.0 - 1e-15))
    K, E = elliptic_KE_vec(k)
    k2 = k * k
    return k / (2.0 * np.pi * (x1 * x2) ** 1.5) * ((2.0 - k2) / (2.0 - 2.0 * k2) * E - K)


def _N_vec(x, y, rho):
    dp = np.hypot(x, rho + y)
    dm = np.hypot(x, rho - y)
    return (1.0 / x) * (1.0 / dp + 1.0 / dm - 1.0 / rho)


def _gauss01(n: int):
    z, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (z + 1.0), 0.5 * w


@dataclass(eq=False)
class BoundaryOperator:
    """Dense kernel matrices over the Gamma vertices of a mesh.

    ``matrix`` is the sum of the local N block and the double-integral M
    block, ordered by ascending vertex id in ``vertex_ids``.
    """

    vertex_ids: np.ndarray
    n_block: np.ndarray
    m_block: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return self.n_block + self.m_block


def _gamma_edges(mesh: TriMesh):
    bmask = mesh.boundary_edge_mask
    edges = mesh.edges[bmask]
    ga = mesh.gamma_flag[edges[:, 0]] & mesh.gamma_flag[edges[:, 1]]
    ax = mesh.axis_flag[edges[:, 0]] & mesh.axis_flag[edges[:, 1]]
    bad = ~(ga | ax)
    if bad.any():
        a, b = edges[np.flatnonzero(bad)[0]]
        raise MeshError(f"boundary edge ({a},{b}) lies on neither the axis nor Gamma")
    gedges = edges[ga]
    # deterministic sweep order along the arc
    mids = 0.5 * (mesh.vertices[gedges[:, 0]] + mesh.vertices[gedges[:, 1]])
    order = np.argsort(np.arctan2(mids[:, 1], mids[:, 0]), kind="stable")
    return gedges[order]


def assemble_boundary(mesh: TriMesh, rho: float, n_gauss: int = 4,
                      n_sing: int = 24) -> BoundaryOperator:
    """Assemble the dense symmetric coupling matrix on Gamma vertices.

    The M block is built from rank-one difference contributions, then
    symmetrised bitwise and given a compensated diagonal so that its rows sum
    to exact floating-point zero (constants are annihilated exactly).
    """
    if rho <= 0.0:
        raise ValueError("rho must be positive")
    vertex_ids = np.flatnonzero(mesh.gamma_flag)
    if len(vertex_ids) == 0:
        raise MeshError("mesh has no Gamma vertices")
    col = np.full(mesh.n_vertices, -1, dtype=np.int64)
    col[vertex_ids] = np.arange(len(vertex_ids))
    edges = _gamma_edges(mesh)
    nv = len(vertex_ids)

    g, gw = _gauss01(n_gauss)
    sgl, sglw = _gauss01(n_sing)

    # ---- local N block (one-dimensional mass-like term) -------------------
    # edges touching or approaching the axis poles see N ~ 1/x^2 and get the
    # high order; generic arc edges keep the cheap rule
    BN = np.zeros((nv, nv))
    poles = np.array([[0.0, -rho], [0.0, rho]])
    for a, b in edges:
        pa, pb = mesh.vertices[a], mesh.vertices[b]
        L = float(np.hypot(*(pb - pa)))
        dpole = min(np.hypot(*(pa - q)) for q in poles)
        dpole = min(dpole, min(np.hypot(*(pb - q)) for q in poles))
        if mesh.axis_flag[a] or mesh.axis_flag[b] or dpole < 3.0 * L:
            ge, gwe = sgl, sglw
        else:
            ge, gwe = g, gw
        pts = pa[None, :] + ge[:, None] * (pb - pa)[None, :]
        Nv = _N_vec(pts[:, 0], pts[:, 1], rho)
        paa = L * float(np.sum(gwe * Nv * (1.0 - ge) ** 2))
        pab = L * float(np.sum(gwe * Nv * ge * (1.0 - ge)))
        pbb = L * float(np.sum(gwe * Nv * ge * ge))
        ia, ib = col[a], col[b]
        BN[ia, ia] += paa
        BN[ia, ib] += pab
        BN[ib, ia] += pab
        BN[ib, ib] += pbb

    # ---- double-integral M block ------------------------------------------
    BM = np.zeros((nv, nv))

    def accumulate(e1, e2, s, t, wq, factor):
        a1, b1 = e1
        a2, b2 = e2
        p1a, p1b = mesh.vertices[a1], mesh.vertices[b1]
        p2a, p2b = mesh.vertices[a2], mesh.vertices[b2]
        L1 = float(np.hypot(*(p1b - p1a)))
        L2 = float(np.hypot(*(p2b - p2a)))
        P1 = p1a[None, :] + s[:, None] * (p1b - p1a)[None, :]
        P2 = p2a[None, :] + t[:, None] * (p2b - p2a)[None, :]
        Mv = _M_vec(P1[:, 0], P1[:, 1], P2[:, 0], P2[:, 1])
        union = sorted({int(a1), int(b1), int(a2), int(b2)})
        G = np.zeros((len(s), len(union)))
        for k, v in enumerate(union):
            if v == a1:
                G[:, k] += 1.0 - s
            if v == b1:
                G[:, k] += s
            if v == a2:
                G[:, k] -= 1.0 - t
            if v == b2:
                G[:, k] -= t
        c = factor * L1 * L2 * (wq * Mv)
        block = (G * c[:, None]).T @ G
        idx = col[union]
        BM[np.ix_(idx, idx)] += block

    # precompute the singular point sets in the unit square; the inner
    # variable is graded toward an optional pole endpoint where the kernel
    # strength grows like 1/x
    def self_rule(pole):
        ss, tt, ww = [], [], []
        for ui, wui in zip(sgl, sglw):
            w = ui ** 3
            jac = 3.0 * ui * ui * wui
            for tj, wtj in zip(sgl, sglw):
                if pole is None:
                    t = (1.0 - w) * tj
                    wt = (1.0 - w) * wtj
                elif pole == 0:
                    t = (1.0 - w) * tj ** 3
                    wt = (1.0 - w) * 3.0 * tj * tj * wtj
                else:
                    t = (1.0 - w) * (1.0 - tj ** 3)
                    wt = (1.0 - w) * 3.0 * tj * tj * wtj
                ss.append(t + w)
                tt.append(t)
                ww.append(2.0 * jac * wt)
        return np.array(ss), np.array(tt), np.array(ww)

    self_rules = {p: self_rule(p) for p in (None, 0, 1)}

    # Duffy with an extra quadratic grading of the radial variable
    duffy_sig, duffy_tau, duffy_w = [], [], []
    for xi, wxi in zip(sgl, sglw):
        z = xi * xi
        jz = 2.0 * xi * wxi
        for eta, weta in zip(sgl, sglw):
            duffy_sig.extend([z, z * eta])
            duffy_tau.extend([z * eta, z])
            duffy_w.extend([jz * weta * z] * 2)
    duffy_sig = np.array(duffy_sig)
    duffy_tau = np.array(duffy_tau)
    duffy_w = np.array(duffy_w)

    # near but non-touching pairs see a sharply varying kernel; give them the
    # same high order as the singular schemes
    gn, gnw = _gauss01(max(2 * n_gauss, n_sing))
    near_s = np.repeat(gn, len(gn))
    near_t = np.tile(gn, len(gn))
    near_w = np.repeat(gnw, len(gn)) * np.tile(gnw, len(gn))

    tens_s = np.repeat(g, n_gauss)
    tens_t = np.tile(g, n_gauss)
    tens_w = np.repeat(gw, n_gauss) * np.tile(gw, n_gauss)

    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    lens = np.hypot(*(mesh.vertices[edges[:, 1]] - mesh.vertices[edges[:, 0]]).T)

    pole_end = np.full(ne := len(edges), -1, dtype=np.int64)
    pole_end[mesh.axis_flag[edges[:, 0]]] = 0
    pole_end[mesh.axis_flag[edges[:, 1]]] = 1

    # the double integral carries a global 1/2; self pairs keep it, unordered
    # cross pairs absorb it against the two symmetric orderings
    for i in range(ne):
        pole = int(pole_end[i]) if pole_end[i] >= 0 else None
        self_s, self_t, self_w = self_rules[pole]
        accumulate(edges[i], edges[i], self_s, self_t, self_w, 0.5)
        for j in range(i + 1, ne):
            shared = set(map(int, edges[i])) & set(map(int, edges[j]))
            if shared:
                v = shared.pop()
                sstar = 0.0 if edges[i][0] == v else 1.0
                tstar = 0.0 if edges[j][0] == v else 1.0
                s = duffy_sig if sstar == 0.0 else 1.0 - duffy_sig
                t = duffy_tau if tstar == 0.0 else 1.0 - duffy_tau
                accumulate(edges[i], edges[j], s, t, duffy_w, 1.0)
            else:
                gap = float(np.hypot(*(mids[i] - mids[j])))
                if gap < 3.0 * max(lens[i], lens[j]):
                    accumulate(edges[i], edges[j], near_s, near_t, near_w, 1.0)
                else:
                    accumulate(edges[i], edges[j], tens_s, tens_t, tens_w, 1.0)

    BM = 0.5 * (BM + BM.T)
    # compensated diagonal: rows of the difference kernel sum to zero in exact
    # arithmetic, so pin each diagonal entry to the representable double that
    # brings the exact row sum closest to zero
    n = len(BM)
    for i in range(n):
        off = [BM[i, j] for j in range(n) if j != i]
        d = -math.fsum(off)
        cands = (d, math.nextafter(d, math.inf), math.nextafter(d, -math.inf))
        BM[i, i] = min(cands, key=lambda c: abs(math.fsum(off + [c])))

    return BoundaryOperator(vertex_ids=vertex_ids, n_block=BN, m_block=BM)
