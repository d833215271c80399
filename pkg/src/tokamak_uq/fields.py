"""Critical points, plasma-boundary classification, and shape features.

X-point detection is a two-stage discrete recipe. Candidate saddles are the
vertices whose cyclic fan of neighbor differences changes sign at least four
times; the physical saddle among them is the one minimizing a locally
averaged recovered-gradient magnitude. The plasma boundary is then the
closed component, around the magnetic axis, of the level set at either the
saddle value or the wall tangency value, whichever the decision logic picks.

All tie-breaks are deterministic (lowest vertex index, leftmost point).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .geometry import ReactorGeometry, point_in_polygon, points_in_polygon
from .mesh import NodalField, R_CHAMBER, TriMesh, locate_many


class FieldError(ValueError):
    pass


# ---------------------------------------------------------------------------
# result containers

class ContourLine(NamedTuple):
    points: np.ndarray          # (n, 2); loops do not repeat the first point
    closed: bool


class ShapingParams(NamedTuple):
    r_geo: float
    a_minor: float
    eps: float
    kappa_e: float
    delta_u: float
    delta_l: float


class RecoveredGradient(NamedTuple):
    values: np.ndarray          # (V, 2)
    fallback: np.ndarray        # (V,) bool, True where the patch fit was skipped


class AxisResult(NamedTuple):
    vertex: int
    value: float
    degenerate: bool


class XPointCandidate(NamedTuple):
    vertex: int
    point: tuple
    value: float
    rank: int
    grad_avg: float


@dataclass
class BoundaryPolyline:
    """Closed plasma boundary polyline at one flux level."""

    points: np.ndarray
    psi_level: float
    kind: str                   # diverted | limited | wall_contact

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if len(self.points) < 4 or not np.array_equal(self.points[0], self.points[-1]):
            raise FieldError("boundary polyline must be closed (first point repeated)")


@dataclass
class CriticalPoints:
    axis_vertex: int
    axis_point: np.ndarray
    axis_value: float
    axis_degenerate: bool
    xpoints: tuple          # XPointCandidate, ranked, values strictly below the axis
    strike_points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    contact_point: Optional[np.ndarray] = None


@dataclass
class BoundaryClassification:
    kind: str               # diverted | limited | wall_contact | no_confinement
    polyline: Optional[BoundaryPolyline]
    psi_bd: Optional[float]
    xpoint: Optional[np.ndarray]
    xpoint_value: Optional[float]
    contact_point: Optional[np.ndarray]
    tie: bool = False       # saddle and tangency levels coincided; diverted kept


# ---------------------------------------------------------------------------
# discrete saddle detection

def _fans(mesh: TriMesh):
    """Angularly ordered neighbor fans plus cyclic prev/next index maps."""
    got = mesh._cache.get("vertex_fans")
    if got is not None:
        return got
    indptr, nbr = mesh.vertex_neighbors()
    counts = np.diff(indptr)
    owner = np.repeat(np.arange(mesh.n_vertices), counts)
    d = mesh.vertices[nbr] - mesh.vertices[owner]
    ang = np.arctan2(d[:, 1], d[:, 0])
    order = np.lexsort((ang, owner))
    fan = nbr[order]
    n = len(fan)
    nxt = np.arange(1, n + 1)
    prv = np.arange(-1, n)[:n]
    ne = counts > 0
    nxt[indptr[1:][ne] - 1] = indptr[:-1][ne]
    prv[indptr[:-1][ne]] = indptr[1:][ne] - 1
    got = (indptr, fan, owner, prv, nxt)
    mesh._cache["vertex_fans"] = got
    return got


def _chamber_vertices(mesh: TriMesh):
    got = mesh._cache.get("chamber_vertices")
    if got is None:
        got = mesh.vertex_in_all(mesh.region_kind == R_CHAMBER)
        mesh._cache["chamber_vertices"] = got
    return got


def saddle_candidates(f: NodalField) -> np.ndarray:
    """Vertices whose fan of value differences changes sign four or more times.

    Zero differences inherit the previous sign around the fan, so flat patches
    produce no candidates. Only vertices with a closed fan lying strictly
    inside the chamber are examined.
    """
    m = f.mesh
    indptr, fan, owner, prv, nxt = _fans(m)
    counts = np.diff(indptr)
    s = np.sign(f.values[owner] - f.values[fan])
    for _ in range(int(counts.max(initial=0))):
        z = s == 0.0
        if not z.any():
            break
        s[z] = s[prv[z]]
    changes = (s != s[nxt]).astype(np.int64)
    nch = np.zeros(m.n_vertices, dtype=np.int64)
    if len(changes):
        starts = np.minimum(indptr[:-1], len(changes) - 1)
        nch = np.add.reduceat(changes, starts)
        nch[counts == 0] = 0
    ok = m.interior_vertex_mask & ~m.axis_flag & _chamber_vertices(m) & (nch >= 4)
    return np.flatnonzero(ok)


def _tri_gradients(f: NodalField) -> np.ndarray:
    m = f.mesh
    p = m.vertices[m.triangles]
    u = f.values[m.triangles]
    two_a = 2.0 * m.areas
    gx = (u[:, 0] * (p[:, 1, 1] - p[:, 2, 1])
          + u[:, 1] * (p[:, 2, 1] - p[:, 0, 1])
          + u[:, 2] * (p[:, 0, 1] - p[:, 1, 1])) / two_a
    gy = (u[:, 0] * (p[:, 2, 0] - p[:, 1, 0])
          + u[:, 1] * (p[:, 0, 0] - p[:, 2, 0])
          + u[:, 2] * (p[:, 1, 0] - p[:, 0, 0])) / two_a
    return np.column_stack([gx, gy])


def recover_gradient(f: NodalField) -> RecoveredGradient:
    """Nodal gradient by least-squares fit of patch P1 gradients.

    Each vertex fits a linear model to the incident-triangle gradients sampled
    at centroids and evaluates it at the vertex. Patches with fewer than three
    triangles, or with collinear centroids, fall back to the area-weighted
    average and are flagged.
    """
    m = f.mesh
    g = _tri_gradients(f)
    indptr, tid = m.vertex_tris()
    counts = np.diff(indptr)
    owner = np.repeat(np.arange(m.n_vertices), counts)
    c = m.centroids[tid]
    dv = c - m.vertices[owner]
    r = np.hypot(dv[:, 0], dv[:, 1])
    h = np.zeros(m.n_vertices)
    np.maximum.at(h, owner, r)
    h[h == 0.0] = 1.0
    # patch-radius scaling keeps the normal systems comparable across the mesh
    rows = (np.ones(len(owner)), dv[:, 0] / h[owner], dv[:, 1] / h[owner])
    A = np.zeros((m.n_vertices, 3, 3))
    for i in range(3):
        for j in range(i, 3):
            acc = np.zeros(m.n_vertices)
            np.add.at(acc, owner, rows[i] * rows[j])
            A[:, i, j] = acc
            A[:, j, i] = acc
    B = np.zeros((m.n_vertices, 3, 2))
    for i in range(3):
        for k in range(2):
            acc = np.zeros(m.n_vertices)
            np.add.at(acc, owner, rows[i] * g[tid, k])
            B[:, i, k] = acc
    det = np.linalg.det(A)
    flag = (counts < 3) | ~np.isfinite(det) | (np.abs(det) < 1e-10 * np.maximum(counts, 1) ** 3)
    out = np.zeros((m.n_vertices, 2))
    ok = ~flag
    if ok.any():
        out[ok] = np.linalg.solve(A[ok], B[ok])[:, 0, :]
    fb = flag & (counts > 0)
    if fb.any():
        wa = np.zeros(m.n_vertices)
        sx = np.zeros(m.n_vertices)
        sy = np.zeros(m.n_vertices)
        ar = m.areas[tid]
        np.add.at(wa, owner, ar)
        np.add.at(sx, owner, ar * g[tid, 0])
        np.add.at(sy, owner, ar * g[tid, 1])
        out[fb, 0] = sx[fb] / wa[fb]
        out[fb, 1] = sy[fb] / wa[fb]
    return RecoveredGradient(out, flag)


def _candidate_averages(f: NodalField, candidates, grad) -> np.ndarray:
    gv = grad.values if isinstance(grad, RecoveredGradient) else np.asarray(grad, dtype=float)
    mag = np.hypot(gv[:, 0], gv[:, 1])
    indptr, nbr = f.mesh.vertex_neighbors()
    avg = np.empty(len(candidates))
    for i, v in enumerate(candidates):
        ring = nbr[indptr[v]:indptr[v + 1]]
        avg[i] = (mag[v] + mag[ring].sum()) / (1 + len(ring))
    return avg


def select_xpoint(f: NodalField, candidates, grad) -> Optional[int]:
    """Candidate with the smallest neighborhood-averaged gradient magnitude."""
    cands = np.asarray(candidates, dtype=np.int64)
    if cands.size == 0:
        return None
    avg = _candidate_averages(f, cands, grad)
    best = float(avg.min())
    tied = avg <= best + 1e-14 * max(1.0, abs(best))
    return int(cands[tied].min())


def find_axis(f: NodalField) -> AxisResult:
    """Best discrete local maximum strictly inside the limiter.

    Falls back to the plain maximum (flagged degenerate) when no vertex
    dominates all its neighbors; a non-strict maximum is also flagged.
    """
    m = f.mesh
    chamber = _chamber_vertices(m)
    if not chamber.any():
        raise FieldError("mesh has no vertex strictly inside the limiter")
    vals = f.values
    indptr, nbr = m.vertex_neighbors()
    counts = np.diff(indptr)
    owner = np.repeat(np.arange(m.n_vertices), counts)
    ge = (vals[owner] >= vals[nbr]).astype(np.int64)
    eq = (vals[owner] == vals[nbr]).astype(np.int64)
    nge = np.zeros(m.n_vertices, dtype=np.int64)
    neq = np.zeros(m.n_vertices, dtype=np.int64)
    if len(ge):
        starts = np.minimum(indptr[:-1], len(ge) - 1)
        nge = np.add.reduceat(ge, starts)
        neq = np.add.reduceat(eq, starts)
        nge[counts == 0] = 0
        neq[counts == 0] = 0
    locmax = chamber & (counts > 0) & (nge == counts)
    if locmax.any():
        pool = np.flatnonzero(locmax)
        vmax = vals[pool].max()
        v = int(pool[vals[pool] == vmax].min())
        degenerate = bool(neq[v] > 0)
    else:
        pool = np.flatnonzero(chamber)
        vmax = vals[pool].max()
        v = int(pool[vals[pool] == vmax].min())
        degenerate = True
    return AxisResult(v, float(vals[v]), degenerate)


def critical_points(f: NodalField) -> CriticalPoints:
    """Axis plus ranked saddle candidates with values below the axis value."""
    ax = find_axis(f)
    cands = saddle_candidates(f)
    xs = []
    if cands.size:
        grad = recover_gradient(f)
        avg = _candidate_averages(f, cands, grad)
        by_vertex = dict(zip((int(v) for v in cands), avg))
        first = select_xpoint(f, cands, grad)
        order = [first] + [int(v) for v in cands[np.lexsort((cands, avg))] if int(v) != first]
        rank = 0
        for v in order:
            val = float(f.values[v])
            if val < ax.value:
                xs.append(XPointCandidate(v, tuple(f.mesh.vertices[v]), val, rank,
                                          float(by_vertex[v])))
                rank += 1
    return CriticalPoints(ax.vertex, f.mesh.vertices[ax.vertex].copy(), ax.value,
                          ax.degenerate, tuple(xs))


# ---------------------------------------------------------------------------
# contour extraction

def extract_contour(f: NodalField, level: float) -> list:
    """Marching-triangles level set, chained into deterministic polylines.

    Vertices hitting the level exactly are nudged to the low side by a virtual
    1e-12-scale perturbation, which pinches the level set off at saddles
    instead of merging lobes across them.
    """
    m = f.mesh
    level = float(level)
    vals = f.values
    work = vals
    hit = vals == level
    if hit.any():
        span = float(vals.max() - vals.min()) if len(vals) else 0.0
        work = vals.copy()
        work[hit] -= 1e-12 * max(abs(level), span)
    edges, tri_edge, _, _ = m._edges()
    wa = work[edges[:, 0]] - level
    wb = work[edges[:, 1]] - level
    crossed = (wa * wb) < 0.0
    if not crossed.any():
        return []
    with np.errstate(divide="ignore", invalid="ignore"):
        t = wa / (wa - wb)
    va = m.vertices[edges[:, 0]]
    pts = va + np.where(crossed, t, 0.0)[:, None] * (m.vertices[edges[:, 1]] - va)

    ncross = crossed[tri_edge].sum(axis=1)
    ce = tri_edge[ncross == 2]
    pick = np.argsort(~crossed[ce], axis=1, kind="stable")[:, :2]
    pairs = np.take_along_axis(ce, pick, axis=1).tolist()

    adj: dict = {}
    for a, b in pairs:
        adj.setdefault(a, []).append(b)
        adj.setdefault(b, []).append(a)

    visited = set()

    def walk(start):
        path = [start]
        visited.add(start)
        prev = -1
        cur = start
        while True:
            step = None
            for n in adj[cur]:
                if n == prev:
                    continue
                if n == start and len(path) > 2:
                    return path, True
                if n not in visited:
                    step = n
                    break
            if step is None:
                return path, False
            path.append(step)
            visited.add(step)
            prev = cur
            cur = step

    chains = []
    for n in sorted(k for k, v in adj.items() if len(v) == 1):
        if n not in visited:
            chains.append(walk(n))
    for n in sorted(adj):
        if n not in visited:
            chains.append(walk(n))

    out = []
    for path, closed in chains:
        P = pts[np.asarray(path)]
        if closed:
            k = int(np.lexsort((P[:, 1], P[:, 0]))[0])
            P = np.roll(P, -k, axis=0)
            if len(P) > 2 and tuple(P[-1]) < tuple(P[1]):
                P = np.concatenate([P[:1], P[1:][::-1]])
        else:
            if tuple(P[-1]) < tuple(P[0]):
                P = P[::-1]
        out.append(ContourLine(np.ascontiguousarray(P), closed))

    def leftmost(c):
        i = int(np.lexsort((c.points[:, 1], c.points[:, 0]))[0])
        return (c.points[i, 0], c.points[i, 1])

    out.sort(key=leftmost)
    return out


def _poly_area(points: np.ndarray) -> float:
    x, y = points[:, 0], points[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _axis_component(f: NodalField, level: float, axis_point, retry_toward=None):
    """Smallest-area closed contour component enclosing the axis, or None.

    Tracing exactly through a saddle is topologically fragile, so when a
    retry anchor is given the level is nudged slightly toward it; the nudged
    contour hugs the requested one to within a fraction of a cell.
    """
    if retry_toward is None:
        levels = (level,)
    else:
        d = retry_toward - level
        levels = (level, level + 1e-9 * d, level + 1e-6 * d, level + 1e-3 * d)
    for lev in levels:
        best = None
        best_area = np.inf
        for c in extract_contour(f, lev):
            if not c.closed:
                continue
            if point_in_polygon(axis_point, c.points):
                a = abs(_poly_area(c.points))
                if a < best_area:
                    best, best_area = c, a
        if best is not None:
            return best.points
    return None


def _segments_properly_cross(segs: np.ndarray, q0, q1) -> bool:
    r = segs[:, 1] - segs[:, 0]
    s = np.asarray(q1, dtype=float) - np.asarray(q0, dtype=float)
    qp = np.asarray(q0, dtype=float) - segs[:, 0]
    d1 = qp[:, 0] * s[1] - qp[:, 1] * s[0]
    d2 = (qp[:, 0] - r[:, 0]) * s[1] - (qp[:, 1] - r[:, 1]) * s[0]
    d3 = -(qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0])
    d4 = d3 + (s[0] * r[:, 1] - s[1] * r[:, 0])
    return bool(np.any((d1 * d2 < 0.0) & (d3 * d4 < 0.0)))


def _loop_segments(points: np.ndarray) -> np.ndarray:
    return np.stack([points, np.roll(points, -1, axis=0)], axis=1)


def _touches_structure(loop_points: np.ndarray, g: ReactorGeometry) -> bool:
    segs = _loop_segments(loop_points)
    for poly, closed in [(g.limiter, True)] + [(p, False) for p in g.divertor]:
        n = len(poly) if closed else len(poly) - 1
        for i in range(n):
            if _segments_properly_cross(segs, poly[i], poly[(i + 1) % len(poly)]):
                return True
    return False


def _close_loop(points: np.ndarray) -> np.ndarray:
    return np.concatenate([points, points[:1]], axis=0)


# ---------------------------------------------------------------------------
# boundary classification

def _limiter_samples(g: ReactorGeometry, per_segment: int = 8) -> np.ndarray:
    lim = g.limiter
    a, b = lim[:-1], lim[1:]
    ts = np.arange(per_segment) / per_segment
    pts = a[:, None, :] * (1.0 - ts)[None, :, None] + b[:, None, :] * ts[None, :, None]
    return pts.reshape(-1, 2)


def _limiter_level(f: NodalField, g: ReactorGeometry):
    pts = _limiter_samples(g)
    vals = f.interpolate(pts)
    i = int(np.argmax(vals))
    return float(vals[i]), pts[i].copy()


# a saddle candidate only competes for the boundary if its recovered-gradient
# average is within this factor of the flattest candidate; genuine saddles in
# calm field regions pass, single-vertex oscillations do not
_GRAD_QUALIFY = 100.0


def _classify(f, g, crit, psi_l, contact_pt) -> BoundaryClassification:
    axis_pt = crit.axis_point
    tie = False
    if crit.xpoints:
        flattest = min(x.grad_avg for x in crit.xpoints)
        pool = [x for x in crit.xpoints if x.grad_avg <= _GRAD_QUALIFY * flattest]
        # the plasma boundary is the innermost separatrix: when the field has
        # several genuine saddles, the one with the highest level below the
        # axis bounds the largest structure-free closed level set
        pool.sort(key=lambda x: (-x.value, x.rank))
        span = float(f.values.max() - f.values.min())
        for xp in pool:
            psi_x = xp.value
            comp = _axis_component(f, psi_x, axis_pt,
                                   retry_toward=crit.axis_value)
            if comp is None:
                continue
            tie = abs(psi_x - psi_l) <= 1e-9 * max(span, abs(psi_x))
            if not _touches_structure(comp, g):
                poly = BoundaryPolyline(_close_loop(comp), psi_x, "diverted")
                return BoundaryClassification("diverted", poly, psi_x,
                                              np.asarray(xp.point), psi_x, None, tie)
            # separatrix leans on a structure: fall back to the tangency level
            comp = _axis_component(f, psi_l, axis_pt, retry_toward=crit.axis_value)
            if comp is None:
                return BoundaryClassification("no_confinement", None, None,
                                              np.asarray(xp.point), psi_x,
                                              contact_pt, tie)
            poly = BoundaryPolyline(_close_loop(comp), psi_l, "wall_contact")
            return BoundaryClassification("wall_contact", poly, psi_l,
                                          np.asarray(xp.point), psi_x,
                                          contact_pt, tie)
    # either no saddle at all, or every saddle level lies below any closed
    # contour around the axis; the tangency level decides confinement
    if crit.xpoints:
        xp0 = crit.xpoints[0]
        xpt, xval = np.asarray(xp0.point), xp0.value
    else:
        xpt, xval = None, None
    comp = _axis_component(f, psi_l, axis_pt, retry_toward=crit.axis_value)
    if comp is None:
        return BoundaryClassification("no_confinement", None, None, xpt, xval,
                                      contact_pt, tie)
    poly = BoundaryPolyline(_close_loop(comp), psi_l, "limited")
    return BoundaryClassification("limited", poly, psi_l, xpt, xval,
                                  contact_pt, tie)


def classify_boundary(f: NodalField, g: ReactorGeometry,
                      crit: CriticalPoints) -> BoundaryClassification:
    """Decide diverted / limited / wall_contact and extract the boundary.

    Diverted requires the closed component of the saddle-level contour around
    the axis to clear the limiter and divertor; otherwise the tangency level
    on the limiter takes over. Saddle candidates are tried innermost level
    first, restricted to those whose local gradient average is comparable to
    the flattest candidate. A missing closed component is reported as
    no_confinement rather than raised.
    """
    psi_l, contact_pt = _limiter_level(f, g)
    return _classify(f, g, crit, psi_l, contact_pt)


def strike_points(f: NodalField, psi_bd: float, divertor) -> np.ndarray:
    """Intersections of the psi_bd contour with the divertor plates, by x."""
    if isinstance(divertor, np.ndarray) and divertor.ndim == 2:
        plates = [divertor]
    else:
        plates = [np.asarray(p, dtype=float) for p in divertor]
    found = []
    for line in extract_contour(f, psi_bd):
        P = line.points
        if line.closed:
            segs = _loop_segments(P)
        elif len(P) >= 2:
            segs = np.stack([P[:-1], P[1:]], axis=1)
        else:
            continue
        r = segs[:, 1] - segs[:, 0]
        for plate in plates:
            for q0, q1 in zip(plate[:-1], plate[1:]):
                s = q1 - q0
                denom = r[:, 0] * s[1] - r[:, 1] * s[0]
                qp = q0[None, :] - segs[:, 0]
                with np.errstate(divide="ignore", invalid="ignore"):
                    t = (qp[:, 0] * s[1] - qp[:, 1] * s[0]) / denom
                    u = (qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]) / denom
                ok = (denom != 0.0) & (t >= 0.0) & (t <= 1.0) & (u >= 0.0) & (u <= 1.0)
                for i in np.flatnonzero(ok):
                    found.append(segs[i, 0] + t[i] * r[i])
    if not found:
        return np.zeros((0, 2))
    pts = np.asarray(found)
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    pts = pts[order]
    keep = [0]
    for i in range(1, len(pts)):
        if np.hypot(*(pts[i] - pts[keep[-1]])) > 1e-9:
            keep.append(i)
    return pts[keep]


def shaping(b) -> ShapingParams:
    """Extrema-based shape descriptors of a closed boundary polyline."""
    P = np.asarray(b.points if isinstance(b, BoundaryPolyline) else b, dtype=float)
    if len(P) >= 2 and np.array_equal(P[0], P[-1]):
        P = P[:-1]
    if len(P) < 3:
        raise FieldError("degenerate boundary polyline")
    x_max, x_min = float(P[:, 0].max()), float(P[:, 0].min())
    y_max, y_min = float(P[:, 1].max()), float(P[:, 1].min())
    a = 0.5 * (x_max - x_min)
    if a <= 0.0 or y_max <= y_min:
        raise FieldError("degenerate boundary polyline")
    r_geo = 0.5 * (x_max + x_min)
    # exact ties share the extremum; report the mean of their x positions
    x_top = float(np.mean(P[P[:, 1] == y_max, 0]))
    x_bot = float(np.mean(P[P[:, 1] == y_min, 0]))
    return ShapingParams(r_geo, a, a / r_geo, (y_max - y_min) / (2.0 * a),
                         (r_geo - x_top) / a, (r_geo - x_bot) / a)


# ---------------------------------------------------------------------------
# combined analysis

@dataclass
class FieldAnalysis:
    crit: CriticalPoints
    boundary: BoundaryClassification
    plasma_tris: np.ndarray


def plasma_triangles(f: NodalField, boundary: BoundaryPolyline) -> np.ndarray:
    """Chamber triangles above the boundary level and inside the boundary.

    The centroid test removes private-flux triangles that pass the value test
    below the x-point.
    """
    m = f.mesh
    tv = f.values[m.triangles]
    cand = (m.region_kind == R_CHAMBER) & np.all(tv >= boundary.psi_level, axis=1)
    ids = np.flatnonzero(cand)
    if len(ids) == 0:
        return ids
    inside = points_in_polygon(m.centroids[ids], boundary.points)
    return ids[inside]


class FieldAnalyzer:
    """Reusable analysis pipeline for many fields on one mesh.

    Caches the limiter sample locations so the tangency level costs one
    interpolation sweep per call instead of a fresh point-location pass.
    """

    def __init__(self, mesh: TriMesh, geometry: ReactorGeometry):
        self.mesh = mesh
        self.geometry = geometry
        pts = _limiter_samples(geometry)
        tris, bary = locate_many(mesh, pts)
        if np.any(tris < 0):
            raise FieldError("limiter sample point outside the mesh")
        self._lim_pts = pts
        self._lim_verts = mesh.triangles[tris]
        self._lim_bary = bary

    def limiter_level(self, values: np.ndarray):
        vals = np.einsum("ij,ij->i", self._lim_bary, values[self._lim_verts])
        i = int(np.argmax(vals))
        return float(vals[i]), self._lim_pts[i].copy()

    def analyze(self, f: NodalField) -> FieldAnalysis:
        if f.mesh is not self.mesh:
            raise FieldError("field lives on a different mesh")
        crit = critical_points(f)
        psi_l, contact_pt = self.limiter_level(f.values)
        cls = _classify(f, self.geometry, crit, psi_l, contact_pt)
        if cls.polyline is not None:
            tris = plasma_triangles(f, cls.polyline)
        else:
            tris = np.zeros(0, dtype=np.int64)
        return FieldAnalysis(crit, cls, tris)


# ---------------------------------------------------------------------------
# flat feature record for reporting and aggregation

FEATURE_FIELDS = (
    "boundary_type", "psi_ma", "psi_bd", "axis_x", "axis_y",
    "xpoint_x", "xpoint_y", "n_strike", "strike1_x", "strike1_y",
    "strike2_x", "strike2_y", "contact_x", "contact_y",
    "r_geo", "a_minor", "eps", "kappa_e", "delta_u", "delta_l",
)


@dataclass
class FeatureRecord:
    boundary_type: str
    psi_ma: float = np.nan
    psi_bd: float = np.nan
    axis_x: float = np.nan
    axis_y: float = np.nan
    xpoint_x: float = np.nan
    xpoint_y: float = np.nan
    n_strike: int = 0
    strike1_x: float = np.nan
    strike1_y: float = np.nan
    strike2_x: float = np.nan
    strike2_y: float = np.nan
    contact_x: float = np.nan
    contact_y: float = np.nan
    r_geo: float = np.nan
    a_minor: float = np.nan
    eps: float = np.nan
    kappa_e: float = np.nan
    delta_u: float = np.nan
    delta_l: float = np.nan

    def to_row(self):
        return [getattr(self, name) for name in FEATURE_FIELDS]


def feature_record(f: NodalField, g: ReactorGeometry,
                   analysis: Optional[FieldAnalysis] = None) -> FeatureRecord:
    """Flatten one field into the report row used by campaign aggregation."""
    if analysis is None:
        analysis = FieldAnalyzer(f.mesh, g).analyze(f)
    crit, cls = analysis.crit, analysis.boundary
    rec = FeatureRecord(cls.kind)
    rec.psi_ma = crit.axis_value
    rec.axis_x, rec.axis_y = crit.axis_point
    if cls.psi_bd is not None:
        rec.psi_bd = cls.psi_bd
    if cls.xpoint is not None:
        rec.xpoint_x, rec.xpoint_y = cls.xpoint
    if cls.contact_point is not None:
        rec.contact_x, rec.contact_y = cls.contact_point
    if cls.kind == "diverted" and cls.psi_bd is not None:
        sp = strike_points(f, cls.psi_bd, g.divertor)
        rec.n_strike = len(sp)
        if len(sp) > 0:
            rec.strike1_x, rec.strike1_y = sp[0]
        if len(sp) > 1:
            rec.strike2_x, rec.strike2_y = sp[1]
    if cls.polyline is not None:
        sh = shaping(cls.polyline)
        rec.r_geo, rec.a_minor = sh.r_geo, sh.a_minor
        rec.eps, rec.kappa_e = sh.eps, sh.kappa_e
        rec.delta_u, rec.delta_l = sh.delta_u, sh.delta_l
    return rec
