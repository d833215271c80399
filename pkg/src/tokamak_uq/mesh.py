"""Conforming P1 triangle meshes and nodal fields.

A mesh is a flat numpy structure: vertex coordinates, triangle connectivity,
per-vertex boundary flags (axis x = 0, coupling circle Gamma) and a per
triangle region tag. Meshes remember their refinement parent so fields can be
carried across levels cheaply.

Region tags are small ints; coil membership is tracked in a parallel array so
the tag set stays closed under refinement.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import splu
from scipy.spatial import cKDTree

R_CHAMBER = 0   # inside the limiter
R_BETWEEN = 1   # inside Gamma, outside the limiter, not a coil
R_COIL = 2

_REGION_TOKEN = {R_CHAMBER: "inside_limiter", R_BETWEEN: "between_walls"}
_TOKEN_REGION = {v: k for k, v in _REGION_TOKEN.items()}

# degree-2 triangle rule with strictly interior points (keeps x > 0 off axis)
QUAD_BARY = np.array([
    [2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
    [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0],
])
QUAD_W = np.array([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])

_BARY_TOL = 1e-12


class MeshError(ValueError):
    pass


class LocateError(ValueError):
    pass


class TriMesh:
    """Immutable conforming triangulation with lazily built adjacency."""

    def __init__(self, vertices, triangles, axis_flag, gamma_flag,
                 region_kind, region_coil=None, parent=None, parent_tri=None,
                 vparent=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int32)
        self.axis_flag = np.asarray(axis_flag, dtype=bool)
        self.gamma_flag = np.asarray(gamma_flag, dtype=bool)
        self.region_kind = np.asarray(region_kind, dtype=np.int8)
        if region_coil is None:
            region_coil = np.full(len(self.triangles), -1, dtype=np.int32)
        self.region_coil = np.asarray(region_coil, dtype=np.int32)
        self.parent = parent
        self.parent_tri = None if parent_tri is None else np.asarray(parent_tri, dtype=np.int32)
        # per-vertex provenance: (a, b) parent vertex ids, a == b for carried vertices
        self.vparent = None if vparent is None else np.asarray(vparent, dtype=np.int32)
        self._cache = {}

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    # -- lazy adjacency ----------------------------------------------------

    def _edges(self):
        got = self._cache.get("edges")
        if got is not None:
            return got
        t = self.triangles
        raw = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
        und = np.sort(raw, axis=1)
        edges, inv = np.unique(und, axis=0, return_inverse=True)
        tri_edge = np.empty((len(t), 3), dtype=np.int64)
        tri_edge[:, 0] = inv[: len(t)]
        tri_edge[:, 1] = inv[len(t): 2 * len(t)]
        tri_edge[:, 2] = inv[2 * len(t):]
        edge_tris = np.full((len(edges), 2), -1, dtype=np.int64)
        counts = np.zeros(len(edges), dtype=np.int64)
        order = np.argsort(inv, kind="stable")
        tri_of = order % len(t)
        e_sorted = inv[order]
        starts = np.searchsorted(e_sorted, np.arange(len(edges)))
        ends = np.searchsorted(e_sorted, np.arange(len(edges)), side="right")
        counts = ends - starts
        for e in range(len(edges)):
            for k, j in enumerate(range(starts[e], min(ends[e], starts[e] + 2))):
                edge_tris[e, k] = tri_of[j]
        got = (edges, tri_edge, edge_tris, counts)
        self._cache["edges"] = got
        return got

    @property
    def edges(self):
        return self._edges()[0]

    @property
    def edge_counts(self):
        return self._edges()[3]

    @property
    def boundary_edge_mask(self):
        return self._edges()[3] == 1

    @property
    def neighbors(self):
        got = self._cache.get("neighbors")
        if got is None:
            edges, tri_edge, edge_tris, _ = self._edges()
            n = edge_tris[tri_edge]          # (T, 3, 2)
            tids = np.arange(self.n_triangles)[:, None]
            got = np.where(n[:, :, 0] == tids, n[:, :, 1], n[:, :, 0]).astype(np.int64)
            self._cache["neighbors"] = got
        return got

    def vertex_tris(self):
        """CSR arrays (indptr, tris) of triangles incident to each vertex."""
        got = self._cache.get("vtris")
        if got is None:
            t = self.triangles.ravel()
            tri_of = np.repeat(np.arange(self.n_triangles), 3)
            order = np.argsort(t, kind="stable")
            indptr = np.searchsorted(t[order], np.arange(self.n_vertices + 1))
            got = (indptr, tri_of[order])
            self._cache["vtris"] = got
        return got

    def vertex_neighbors(self):
        """CSR arrays (indptr, verts) of adjacent vertices, sorted per vertex."""
        got = self._cache.get("vneigh")
        if got is None:
            e = self.edges
            both = np.concatenate([e, e[:, ::-1]])
            order = np.lexsort((both[:, 1], both[:, 0]))
            both = both[order]
            indptr = np.searchsorted(both[:, 0], np.arange(self.n_vertices + 1))
            got = (indptr, both[:, 1].copy())
            self._cache["vneigh"] = got
        return got

    @property
    def interior_vertex_mask(self):
        """Vertices whose triangle fan closes (not on the mesh boundary)."""
        got = self._cache.get("interior_vertex")
        if got is None:
            iptr, _ = self.vertex_tris()
            nptr, _ = self.vertex_neighbors()
            ntri = np.diff(iptr)
            nngh = np.diff(nptr)
            got = (ntri > 0) & (ntri == nngh)
            self._cache["interior_vertex"] = got
        return got

    @property
    def areas(self):
        got = self._cache.get("areas")
        if got is None:
            p = self.vertices[self.triangles]
            e1 = p[:, 1] - p[:, 0]
            e2 = p[:, 2] - p[:, 0]
            got = 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
            self._cache["areas"] = got
        return got

    @property
    def centroids(self):
        got = self._cache.get("centroids")
        if got is None:
            got = self.vertices[self.triangles].mean(axis=1)
            self._cache["centroids"] = got
        return got

    def _kdtree(self):
        got = self._cache.get("kdtree")
        if got is None:
            got = cKDTree(self.centroids)
            self._cache["kdtree"] = got
        return got

    def vertex_in_all(self, tri_mask):
        """True for vertices all of whose incident triangles satisfy tri_mask."""
        indptr, tris = self.vertex_tris()
        ok = tri_mask[tris]
        out = np.zeros(self.n_vertices, dtype=bool)
        counts = np.diff(indptr)
        sums = np.add.reduceat(ok, indptr[:-1], dtype=np.int64)
        nz = counts > 0
        out[nz] = sums[nz] == counts[nz]
        return out


@dataclass(eq=False)
class NodalField:
    """P1 nodal values on a mesh."""

    mesh: TriMesh
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_vertices,):
            raise MeshError("field length does not match vertex count")

    def copy(self):
        return NodalField(self.mesh, self.values.copy())

    def interpolate(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        tris, bary = locate_many(self.mesh, pts)
        if np.any(tris < 0):
            bad = np.flatnonzero(tris < 0)[0]
            raise LocateError(f"point {tuple(pts[bad])} lies outside the mesh")
        vals = np.einsum("ij,ij->i", bary, self.values[self.mesh.triangles[tris]])
        return vals if np.asarray(points).ndim > 1 else float(vals[0])


# ---------------------------------------------------------------------------
# barycentric helpers

def _bary_batch(verts, pts):
    """Barycentric coords of pts (n, 2) in triangles verts (n, 3, 2)."""
    v0 = verts[..., 0, :]
    e1 = verts[..., 1, :] - v0
    e2 = verts[..., 2, :] - v0
    d = e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0]
    r = pts - v0
    with np.errstate(divide="ignore", invalid="ignore"):
        l1 = (r[..., 0] * e2[..., 1] - r[..., 1] * e2[..., 0]) / d
        l2 = (e1[..., 0] * r[..., 1] - e1[..., 1] * r[..., 0]) / d
    l0 = 1.0 - l1 - l2
    return np.stack([l0, l1, l2], axis=-1)


def locate_many(mesh: TriMesh, pts, k: int = 16):
    """Locate many points at once. Returns (tri_ids, bary); tri_ids -1 outside.

    Candidate triangles come from a centroid k-d tree; among containing
    candidates the lowest triangle index wins, so results do not depend on
    tree ordering.
    """
    pts = np.asarray(pts, dtype=float)
    n = len(pts)
    tri_ids = np.full(n, -1, dtype=np.int64)
    bary_out = np.zeros((n, 3))
    if n == 0 or mesh.n_triangles == 0:
        return tri_ids, bary_out
    kq = min(k, mesh.n_triangles)
    _, cand = mesh._kdtree().query(pts, k=kq)
    cand = np.atleast_2d(cand)
    if cand.shape[0] != n:
        cand = cand.reshape(n, -1)
    verts = mesh.vertices[mesh.triangles[cand]]          # (n, kq, 3, 2)
    bary = _bary_batch(verts, pts[:, None, :])
    ok = bary.min(axis=2) >= -_BARY_TOL
    any_ok = ok.any(axis=1)
    if np.any(any_ok):
        masked = np.where(ok, cand, np.iinfo(np.int64).max)
        best = masked.min(axis=1)
        rows = np.flatnonzero(any_ok)
        tri_ids[rows] = best[rows]
        pick = (cand[rows] == best[rows, None]).argmax(axis=1)
        bary_out[rows] = bary[rows, pick]
    missing = np.flatnonzero(~any_ok)
    if len(missing):
        # exhaustive sweep in chunks; rare, so cost is acceptable
        allverts = mesh.vertices[mesh.triangles]
        for i in missing:
            b = _bary_batch(allverts, pts[i][None, None, :].repeat(mesh.n_triangles, axis=0)[:, 0, :])
            good = np.flatnonzero(b.min(axis=1) >= -_BARY_TOL)
            if len(good):
                tri_ids[i] = good[0]
                bary_out[i] = b[good[0]]
    return tri_ids, bary_out


def locate_point(mesh: TriMesh, p):
    """Locate a single point. Returns (triangle index, barycentric coords).

    On shared edges and vertices the lowest containing triangle index is
    returned. Raises LocateError outside the mesh.
    """
    pts = np.asarray(p, dtype=float)[None, :]
    tris, bary = locate_many(mesh, pts)
    t = int(tris[0])
    if t < 0:
        raise LocateError(f"point {tuple(np.asarray(p, float))} lies outside the mesh")
    b = bary[0]
    if b.min() <= _BARY_TOL:
        # on an edge or vertex: canonicalise among all containing triangles
        near1 = np.flatnonzero(b >= 1.0 - 1e-9)
        if len(near1):
            v = int(mesh.triangles[t, near1[0]])
            indptr, vtris = mesh.vertex_tris()
            cands = np.sort(vtris[indptr[v]:indptr[v + 1]])
        else:
            cands = np.unique(np.concatenate([[t], mesh.neighbors[t][mesh.neighbors[t] >= 0]]))
        verts = mesh.vertices[mesh.triangles[cands]]
        bb = _bary_batch(verts, pts.repeat(len(cands), axis=0))
        good = np.flatnonzero(bb.min(axis=1) >= -_BARY_TOL)
        if len(good):
            t = int(cands[good[0]])
            b = bb[good[0]]
    return t, b


# ---------------------------------------------------------------------------
# construction helpers

def structured_rectangle_mesh(x0, x1, y0, y1, nx, ny, region=R_CHAMBER):
    """Right-diagonal structured triangulation of a rectangle."""
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (ny + 1) + j

    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            tris.append((a, b, c))
            tris.append((a, c, d))
    tris = np.array(tris, dtype=np.int32)
    axis = verts[:, 0] == 0.0
    gamma = np.zeros(len(verts), dtype=bool)
    kind = np.full(len(tris), region, dtype=np.int8)
    return TriMesh(verts, tris, axis, gamma, kind)


def submesh(mesh: TriMesh, tri_ids):
    """Extract the mesh induced by tri_ids. Returns (mesh, vertex_map) where
    vertex_map[i] is the parent vertex id of submesh vertex i."""
    tri_ids = np.asarray(tri_ids, dtype=np.int64)
    used = np.unique(mesh.triangles[tri_ids])
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(len(used))
    sub = TriMesh(
        mesh.vertices[used],
        remap[mesh.triangles[tri_ids]],
        mesh.axis_flag[used],
        mesh.gamma_flag[used],
        mesh.region_kind[tri_ids],
        mesh.region_coil[tri_ids],
    )
    return sub, used


# ---------------------------------------------------------------------------
# refinement

def mark_near_separatrix(field: NodalField, psi_star: float, alpha: float = 0.05):
    """Triangles with a vertex value within alpha*|psi_star| of psi_star."""
    if psi_star == 0.0:
        raise MeshError("degenerate marking level psi_star = 0")
    close = np.abs(field.values - psi_star) <= alpha * abs(psi_star)
    hit = close[field.mesh.triangles].any(axis=1)
    return np.flatnonzero(hit)


def refine_marked(mesh: TriMesh, marked):
    """Red/green refinement of the marked triangles.

    Marked triangles split into four; neighbours with two or more split edges
    are promoted to red until the split set stabilises, and single split
    edges are closed by bisection. Midpoints of boundary edges whose
    endpoints both lie on Gamma are projected back onto the circle.
    """
    if isinstance(marked, (set, frozenset)):
        marked = sorted(marked)
    marked = np.asarray(marked, dtype=np.int64)
    if marked.size == 0:
        return mesh
    if marked.min() < 0 or marked.max() >= mesh.n_triangles:
        raise MeshError("marked triangle index out of range")

    edges, tri_edge, _, counts = mesh._edges()
    red = np.zeros(mesh.n_triangles, dtype=bool)
    red[marked] = True
    split = np.zeros(len(edges), dtype=bool)
    while True:
        split[tri_edge[red].ravel()] = True
        nsplit = split[tri_edge].sum(axis=1)
        promote = (~red) & (nsplit >= 2)
        if not promote.any():
            break
        red |= promote

    split_ids = np.flatnonzero(split)           # ascending edge order, deterministic
    mid_of = np.full(len(edges), -1, dtype=np.int64)
    mid_of[split_ids] = mesh.n_vertices + np.arange(len(split_ids))

    ev = mesh.vertices[edges[split_ids]]
    mids = ev.mean(axis=1)
    a, b = edges[split_ids, 0], edges[split_ids, 1]
    on_boundary = counts[split_ids] == 1
    gamma_new = mesh.gamma_flag[a] & mesh.gamma_flag[b] & on_boundary
    axis_new = mesh.axis_flag[a] & mesh.axis_flag[b] & on_boundary
    if gamma_new.any():
        rr = 0.5 * (np.hypot(*mesh.vertices[a[gamma_new]].T) + np.hypot(*mesh.vertices[b[gamma_new]].T))
        cur = np.hypot(mids[gamma_new, 0], mids[gamma_new, 1])
        mids[gamma_new] *= (rr / cur)[:, None]

    new_vertices = np.vstack([mesh.vertices, mids])
    new_axis = np.concatenate([mesh.axis_flag, axis_new])
    new_gamma = np.concatenate([mesh.gamma_flag, gamma_new])
    vparent = np.column_stack([
        np.concatenate([np.arange(mesh.n_vertices), a]),
        np.concatenate([np.arange(mesh.n_vertices), b]),
    ]).astype(np.int32)

    tris = []
    kinds = []
    coils = []
    parents = []

    T = mesh.triangles
    for t in range(mesh.n_triangles):
        v0, v1, v2 = (int(T[t, 0]), int(T[t, 1]), int(T[t, 2]))
        # tri_edge order: edge 0 = (v1,v2), 1 = (v2,v0), 2 = (v0,v1)
        e0, e1, e2 = tri_edge[t]
        m12, m20, m01 = int(mid_of[e0]), int(mid_of[e1]), int(mid_of[e2])
        if red[t]:
            children = [(v0, m01, m20), (m01, v1, m12), (m20, m12, v2), (m01, m12, m20)]
        else:
            ms = [m12 >= 0, m20 >= 0, m01 >= 0]
            n = sum(ms)
            if n == 0:
                children = [(v0, v1, v2)]
            else:
                # exactly one split edge: green bisection toward the opposite vertex
                if ms[0]:
                    children = [(v0, v1, m12), (v0, m12, v2)]
                elif ms[1]:
                    children = [(v1, v2, m20), (v1, m20, v0)]
                else:
                    children = [(v2, v0, m01), (v2, m01, v1)]
        for ch in children:
            tris.append(ch)
            kinds.append(mesh.region_kind[t])
            coils.append(mesh.region_coil[t])
            parents.append(t)

    out = TriMesh(
        new_vertices,
        np.array(tris, dtype=np.int32),
        new_axis,
        new_gamma,
        np.array(kinds, dtype=np.int8),
        np.array(coils, dtype=np.int32),
        parent=mesh,
        parent_tri=np.array(parents, dtype=np.int32),
        vparent=vparent,
    )
    return out


def uniform_refine_interior(mesh: TriMesh, levels: int):
    """Refine every inside-limiter triangle `levels` times (red, with green
    closure at the chamber boundary)."""
    if levels < 0:
        raise MeshError("levels must be >= 0")
    m = mesh
    for _ in range(levels):
        m = refine_marked(m, np.flatnonzero(m.region_kind == R_CHAMBER))
    return m


def carry_field(field: NodalField, child: TriMesh) -> NodalField:
    """Interpolate a parent-mesh field onto a direct refinement child."""
    if child.parent is not field.mesh or child.vparent is None:
        raise MeshError("child mesh is not a direct refinement of the field's mesh")
    va, vb = child.vparent[:, 0], child.vparent[:, 1]
    vals = 0.5 * (field.values[va] + field.values[vb])
    return NodalField(child, vals)


# ---------------------------------------------------------------------------
# L2 projection

class L2Projector:
    """Projects fields from arbitrary source meshes onto one destination mesh.

    The destination mass matrix is factorised once; each projection costs a
    point location sweep for the quadrature points plus one triangular solve.
    """

    def __init__(self, dst_mesh: TriMesh):
        self.mesh = dst_mesh
        t = dst_mesh.triangles
        p = dst_mesh.vertices[t]
        self.qpoints = np.einsum("qk,tkx->tqx", QUAD_BARY, p).reshape(-1, 2)
        A = dst_mesh.areas
        # P1 mass matrix, exact: A/12 * (1 + delta_ij)
        ii = np.repeat(t, 3, axis=1).ravel()
        jj = np.tile(t, (1, 3)).ravel()
        vals = (np.tile(np.array([2.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0]) / 12.0,
                        (len(t), 1)) * A[:, None]).ravel()
        M = coo_matrix((vals, (ii, jj)), shape=(dst_mesh.n_vertices,) * 2).tocsc()
        try:
            self._lu = splu(M)
        except RuntimeError as e:
            raise MeshError(f"destination mass matrix is singular: {e}") from None
        self._M = M

    def project(self, src: NodalField):
        """Returns (field, outside_vertex_ids)."""
        tris, bary = locate_many(src.mesh, self.qpoints)
        vals = np.einsum("ij,ij->i", bary, src.values[src.mesh.triangles[np.maximum(tris, 0)]])
        vals[tris < 0] = 0.0
        vals = vals.reshape(-1, 3)
        m = self.mesh
        # b_i = sum_t (A_t/3) sum_q vals_q * phi_i(q)
        w = (m.areas[:, None] / 3.0) * vals                 # (T, 3q)
        b = np.zeros(m.n_vertices)
        phi = QUAD_BARY                                     # phi_i at q: columns
        for q in range(3):
            np.add.at(b, m.triangles[:, 0], w[:, q] * phi[q, 0])
            np.add.at(b, m.triangles[:, 1], w[:, q] * phi[q, 1])
            np.add.at(b, m.triangles[:, 2], w[:, q] * phi[q, 2])
        outside = np.array([], dtype=np.int64)
        if np.any(tris < 0):
            vt, vb = locate_many(src.mesh, m.vertices)
            outside = np.flatnonzero(vt < 0)
        c = self._lu.solve(b)
        if len(outside):
            c[outside] = 0.0
        return NodalField(m, c), outside


def project_field(src: NodalField, dst_mesh: TriMesh) -> NodalField:
    """L2 projection of a nodal field onto another mesh."""
    out, _ = L2Projector(dst_mesh).project(src)
    return out


# ---------------------------------------------------------------------------
# audit

def audit_mesh(mesh: TriMesh) -> None:
    """Full conformity audit; raises MeshError on the first failure."""
    v, t = mesh.vertices, mesh.triangles
    if len(v) and (t.min() < 0 or t.max() >= len(v)):
        raise MeshError("triangle vertex index out of range")
    if np.any(mesh.areas <= 0.0):
        bad = int(np.argmax(mesh.areas <= 0.0))
        raise MeshError(f"triangle {bad} has non-positive area {mesh.areas[bad]:.3e}")
    # duplicate vertices
    _, idx = np.unique(v, axis=0, return_index=True)
    if len(idx) != len(v):
        raise MeshError("duplicate vertex coordinates")
    # each undirected edge in at most two triangles, each directed edge once
    counts = mesh.edge_counts
    if np.any(counts > 2):
        raise MeshError("edge shared by more than two triangles")
    raw = np.concatenate([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]])
    directed = np.unique(raw, axis=0)
    if len(directed) != len(raw):
        raise MeshError("inconsistent triangle orientation (repeated directed edge)")
    # hanging nodes: no vertex strictly inside a once-counted edge
    bmask = counts == 1
    edges = mesh.edges[bmask]
    for a, b in edges:
        pa, pb = v[a], v[b]
        d = pb - pa
        L2 = float(d @ d)
        r = v - pa
        tpar = (r @ d) / L2
        perp = np.abs(r[:, 0] * d[1] - r[:, 1] * d[0]) / np.sqrt(L2)
        inside = (tpar > 1e-9) & (tpar < 1 - 1e-9) & (perp < 1e-12)
        inside[[a, b]] = False
        if inside.any():
            w = int(np.flatnonzero(inside)[0])
            raise MeshError(f"hanging node: vertex {w} lies inside boundary edge ({a},{b})")
    if np.any(mesh.axis_flag != (v[:, 0] == 0.0)):
        raise MeshError("axis flags inconsistent with x coordinates")
    if mesh.gamma_flag.any():
        r = np.hypot(v[mesh.gamma_flag, 0], v[mesh.gamma_flag, 1])
        med = np.median(r)
        if np.any(np.abs(r - med) > 1e-9 * med):
            raise MeshError("Gamma vertices are not equidistant from the origin")


# ---------------------------------------------------------------------------
# file formats

def write_mesh(mesh: TriMesh, path) -> None:
    buf = io.StringIO()
    buf.write(f"{mesh.n_vertices} {mesh.n_triangles}\n")
    for (x, y), ax, gm in zip(mesh.vertices, mesh.axis_flag, mesh.gamma_flag):
        buf.write(f"{x:.17g} {y:.17g} {int(ax)} {int(gm)}\n")
    for (v0, v1, v2), kind, coil in zip(mesh.triangles, mesh.region_kind, mesh.region_coil):
        if kind == R_COIL:
            tag = f"coil:{coil}"
        else:
            tag = _REGION_TOKEN[int(kind)]
        buf.write(f"{v0} {v1} {v2} {tag}\n")
    with open(path, "w") as f:
        f.write(buf.getvalue())


def read_mesh(path) -> TriMesh:
    with open(path) as f:
        lines = [ln for ln in (s.strip() for s in f) if ln and not ln.startswith("#")]
    try:
        nv, nt = (int(tok) for tok in lines[0].split())
        verts = np.empty((nv, 2))
        axis = np.empty(nv, dtype=bool)
        gamma = np.empty(nv, dtype=bool)
        for i in range(nv):
            x, y, a, g = lines[1 + i].split()
            verts[i] = (float(x), float(y))
            axis[i] = bool(int(a))
            gamma[i] = bool(int(g))
        tris = np.empty((nt, 3), dtype=np.int32)
        kind = np.empty(nt, dtype=np.int8)
        coil = np.full(nt, -1, dtype=np.int32)
        for i in range(nt):
            v0, v1, v2, tag = lines[1 + nv + i].split()
            tris[i] = (int(v0), int(v1), int(v2))
            if tag.startswith("coil:"):
                kind[i] = R_COIL
                coil[i] = int(tag.split(":", 1)[1])
            else:
                kind[i] = _TOKEN_REGION[tag]
    except (KeyError, ValueError, IndexError) as e:
        raise MeshError(f"malformed mesh file {path}: {e}") from None
    return TriMesh(verts, tris, axis, gamma, kind, coil)


def write_field_csv(field: NodalField, path) -> None:
    with open(path, "w") as f:
        f.write("vertex_id,x,y,value\n")
        for i, ((x, y), val) in enumerate(zip(field.mesh.vertices, field.values)):
            f.write(f"{i},{x:.17g},{y:.17g},{val:.17g}\n")


def read_field_csv(path, mesh: TriMesh) -> NodalField:
    vals = np.empty(mesh.n_vertices)
    seen = 0
    with open(path) as f:
        header = f.readline()
        if header.strip() != "vertex_id,x,y,value":
            raise MeshError(f"unexpected field CSV header in {path}")
        for line in f:
            if not line.strip():
                continue
            i_s, _x, _y, v_s = line.split(",")
            vals[int(i_s)] = float(v_s)
            seen += 1
    if seen != mesh.n_vertices:
        raise MeshError(f"field CSV has {seen} rows, mesh has {mesh.n_vertices} vertices")
    return NodalField(mesh, vals)


def write_field_vtk(field: NodalField, path, name: str = "psi") -> None:
    m = field.mesh
    with open(path, "w") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write("nodal field\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {m.n_vertices} double\n")
        for x, y in m.vertices:
            f.write(f"{x:.17g} {y:.17g} 0\n")
        f.write(f"CELLS {m.n_triangles} {4 * m.n_triangles}\n")
        for v0, v1, v2 in m.triangles:
            f.write(f"3 {v0} {v1} {v2}\n")
        f.write(f"CELL_TYPES {m.n_triangles}\n")
        f.write("5\n" * m.n_triangles)
        f.write(f"POINT_DATA {m.n_vertices}\nSCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for val in field.values:
            f.write(f"{val:.17g}\n")
