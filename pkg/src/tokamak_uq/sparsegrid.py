"""Smolyak sparse-grid interpolation on nested Chebyshev-extrema grids.

Vector-valued samples are combined through hierarchical surpluses: each node
carries the difference between its sample and the evaluation of the coarser
interpolant at that point, so refining a grid reuses every stored vector
unchanged. One-dimensional levels hold xi(1) = 1 and xi(i) = 2^(i-1) + 1
points, the extrema of Chebyshev polynomials mapped to [0, 1].
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

_MAGIC = b"TUQSURR1"


class SparseGridError(ValueError):
    pass


def xi(i: int) -> int:
    """Nodes in the level-i one-dimensional grid."""
    if i < 1:
        raise SparseGridError("one-dimensional level must be >= 1")
    return 1 if i == 1 else 2 ** (i - 1) + 1


def _new_per_level(i: int) -> int:
    # points first appearing at level i (nested grids)
    if i == 1:
        return 1
    if i == 2:
        return 2
    return 2 ** (i - 2)


def chebyshev_nodes(m: int) -> np.ndarray:
    """Sorted Chebyshev extrema on [0, 1]; m = 1 gives the midpoint."""
    if m == 1:
        return np.array([0.5])
    k = m - 1
    if k & (k - 1) or m < 3:
        raise SparseGridError(f"node count {m} is not 1 or 2^k + 1")
    j = np.arange(m)
    return 0.5 * (1.0 - np.cos(np.pi * j / (m - 1)))


def _new_positions(i: int) -> np.ndarray:
    """Indices (into the sorted level-i grid) of points new at level i."""
    if i == 1:
        return np.array([0])
    if i == 2:
        return np.array([0, 2])
    return np.arange(1, xi(i), 2)


def _multi_indices(d: int, total: int):
    """All index vectors of d positive integers summing to `total`, lex order."""
    out = []
    for cuts in combinations(range(1, total), d - 1):
        prev, vec = 0, []
        for c in cuts:
            vec.append(c - prev)
            prev = c
        vec.append(total - prev)
        out.append(tuple(vec))
    out.sort()
    return out


def grid_size(d: int, level: int) -> int:
    """Number of sparse-grid nodes at the given dimension and level."""
    if d < 1 or level < 0:
        raise SparseGridError("need d >= 1 and level >= 0")
    n = 0
    for q in range(d, d + level + 1):
        for idx in _multi_indices(d, q):
            n += math.prod(_new_per_level(i) for i in idx)
    return n


def full_grid_size(d: int, level: int) -> int:
    """Tensor-grid node count xi(level+1)^d, for contrast with grid_size.

    Python integers are unbounded, so the astronomical counts this is meant
    to illustrate come back exact.
    """
    if d < 1 or level < 0:
        raise SparseGridError("need d >= 1 and level >= 0")
    return xi(level + 1) ** d


def enumerate_nodes(d: int, level: int):
    """Deterministic node table: (multi_index, position) pairs plus coords.

    Nodes are ordered by total index, then lexicographic multi-index, then
    lexicographic position tuple; this order is the storage contract for
    surplus matrices.
    """
    indices, positions, coords = [], [], []
    for q in range(d, d + level + 1):
        for idx in _multi_indices(d, q):
            grids = [chebyshev_nodes(xi(i)) for i in idx]
            news = [_new_positions(i) for i in idx]
            shape = [len(n) for n in news]
            for flat in range(math.prod(shape)):
                pos = []
                rem = flat
                for s in reversed(shape):
                    pos.append(rem % s)
                    rem //= s
                pos = [news[p][j] for p, j in enumerate(reversed(pos))]
                indices.append(idx)
                positions.append(tuple(pos))
                coords.append([grids[p][j] for p, j in enumerate(pos)])
    return (np.array(indices, dtype=np.int64).reshape(len(indices), d),
            np.array(positions, dtype=np.int64).reshape(len(positions), d),
            np.array(coords, dtype=float).reshape(len(coords), d))


def _barycentric_weights(m: int) -> np.ndarray:
    # Chebyshev extrema admit closed-form weights: alternating signs,
    # halved at the endpoints
    if m == 1:
        return np.array([1.0])
    w = np.ones(m)
    w[1::2] = -1.0
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


class _Basis1D:
    """Lagrange rows on every 1-D level in use, barycentric form."""

    def __init__(self, max_level: int):
        self.nodes = {i: chebyshev_nodes(xi(i)) for i in range(1, max_level + 1)}
        self.weights = {i: _barycentric_weights(xi(i)) for i in self.nodes}

    def rows(self, i: int, x: float) -> np.ndarray:
        """Values of all level-i Lagrange polynomials at x."""
        nd = self.nodes[i]
        if len(nd) == 1:
            return np.array([1.0])
        diff = x - nd
        hit = np.flatnonzero(diff == 0.0)
        if len(hit):
            row = np.zeros(len(nd))
            row[hit[0]] = 1.0
            return row
        t = self.weights[i] / diff
        return t / t.sum()


@dataclass
class Surrogate:
    """Sparse-grid interpolant of a vector-valued map over a box."""
    d: int
    level: int
    box: np.ndarray                  # (d, 2) lower/upper bounds
    indices: np.ndarray              # (N, d) owning multi-index per node
    positions: np.ndarray            # (N, d) 1-D node index per dimension
    nodes_unit: np.ndarray           # (N, d) coordinates in [0, 1]^d
    surpluses: np.ndarray            # (N, V) hierarchical surpluses
    mesh_digest: str = ""
    failures: list = field(default_factory=list)

    def __post_init__(self):
        self.box = np.asarray(self.box, dtype=float).reshape(self.d, 2)
        self._basis = _Basis1D(int(self.indices.max()) if len(self.indices) else 1)

    @property
    def n_nodes(self):
        return self.surpluses.shape[0]

    @property
    def vector_length(self):
        return self.surpluses.shape[1]

    def nodes_physical(self) -> np.ndarray:
        lo, hi = self.box[:, 0], self.box[:, 1]
        return lo + self.nodes_unit * (hi - lo)

    def to_unit(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=float)
        lo, hi = self.box[:, 0], self.box[:, 1]
        return (p - lo) / (hi - lo)


def _eval_unit(s: Surrogate, u: np.ndarray) -> np.ndarray:
    # one basis row per (dimension, level) pair actually present
    cache = {}
    for p in range(s.d):
        for i in np.unique(s.indices[:, p]):
            cache[(p, int(i))] = s._basis.rows(int(i), u[p])
    w = np.ones(s.n_nodes)
    for p in range(s.d):
        col = np.empty(s.n_nodes)
        for i in np.unique(s.indices[:, p]):
            sel = s.indices[:, p] == i
            col[sel] = cache[(p, int(i))][s.positions[sel, p]]
        w *= col
    return w @ s.surpluses


def eval_surrogate(s: Surrogate, point, allow_outside: bool = False) -> np.ndarray:
    """Interpolant value at one point of the box."""
    u = s.to_unit(point)
    if not allow_outside and (np.any(u < -1e-12) or np.any(u > 1 + 1e-12)):
        raise SparseGridError(f"point {np.asarray(point)} outside the surrogate box")
    return _eval_unit(s, np.clip(u, 0.0, 1.0) if not allow_outside else u)


def _run_evals(eval_fn, points, jobs):
    if jobs and jobs > 1 and len(points) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(eval_fn, points))
    return [eval_fn(p) for p in points]


def build_surrogate(eval_fn, d: int, level: int, box, jobs: int = 0,
                    mesh_digest: str = "") -> Surrogate:
    """Assemble a surrogate level by level.

    `eval_fn` maps a physical point to a 1-D sample vector; a raised
    exception or a None return flags the node and substitutes the nearest
    successful sample so the interpolant stays defined.
    """
    box = np.asarray(box, dtype=float).reshape(d, 2)
    if np.any(box[:, 1] <= box[:, 0]):
        raise SparseGridError("box upper bounds must exceed lower bounds")
    s = None
    for lev in range(level + 1):
        s = _extend(s, eval_fn, d, lev, box, jobs, mesh_digest)
    return s


def refine_level(s: Surrogate, eval_fn, jobs: int = 0) -> Surrogate:
    """One level up; stored surpluses are reused bit for bit."""
    return _extend(s, eval_fn, s.d, s.level + 1, s.box, jobs, s.mesh_digest)


def _extend(s, eval_fn, d, lev, box, jobs, digest):
    indices, positions, coords = enumerate_nodes(d, lev)
    old = 0 if s is None else s.n_nodes
    new_idx = indices[old:]
    new_pos = positions[old:]
    new_unit = coords[old:]
    lo, hi = box[:, 0], box[:, 1]
    pts = [lo + u * (hi - lo) for u in new_unit]

    raw = []
    failed = []
    for k, r in enumerate(_run_evals(_guard(eval_fn), pts, jobs)):
        raw.append(r)
        if r is None:
            failed.append(old + k)
    good = [old + k for k, r in enumerate(raw) if r is not None]
    if s is None and not good:
        raise SparseGridError("every level-0 evaluation failed")
    # nearest successful node (this level, then existing grid) fills the gap
    for k, r in enumerate(raw):
        if r is not None:
            continue
        cand_pts, cand_vals = [], []
        for g in good:
            cand_pts.append(coords[g])
            cand_vals.append(raw[g - old])
        if s is not None:
            prev_vals = _node_samples(s)
            for g in range(old):
                cand_pts.append(coords[g])
                cand_vals.append(prev_vals[g])
        dist = np.linalg.norm(np.asarray(cand_pts) - new_unit[k], axis=1)
        raw[k] = np.asarray(cand_vals[int(np.argmin(dist))], dtype=float)

    samples = np.array([np.asarray(r, dtype=float).ravel() for r in raw])
    if s is None:
        surp = samples
        fails = list(failed)
    else:
        prev = np.array([_eval_unit(s, u) for u in new_unit])
        if samples.shape[1] != s.vector_length:
            raise SparseGridError("sample vector length changed between levels")
        surp = np.vstack([s.surpluses, samples - prev])
        fails = list(s.failures) + failed
    return Surrogate(d=d, level=lev, box=box, indices=indices,
                     positions=positions, nodes_unit=coords, surpluses=surp,
                     mesh_digest=digest, failures=fails)


def _guard(eval_fn):
    def wrapped(p):
        try:
            return eval_fn(p)
        except Exception:
            return None
    return wrapped


def _node_samples(s: Surrogate) -> np.ndarray:
    """Samples the grid stores, reconstructed from surpluses."""
    return np.array([_eval_unit(s, u) for u in s.nodes_unit])


# ---------------------------------------------------------------------------
# persistence

def save_surrogate(s: Surrogate, path) -> None:
    """Binary node table + surplus matrix with a JSON header line."""
    header = {
        "d": s.d,
        "level": s.level,
        "box": [[float(a), float(b)] for a, b in s.box],
        "mesh_digest": s.mesh_digest,
        "n_nodes": int(s.n_nodes),
        "vector_length": int(s.vector_length),
        "failures": [int(f) for f in s.failures],
    }
    blob = json.dumps(header, sort_keys=True).encode() + b"\n"
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(len(blob).to_bytes(8, "little"))
        f.write(blob)
        f.write(np.ascontiguousarray(s.indices, dtype="<i8").tobytes())
        f.write(np.ascontiguousarray(s.positions, dtype="<i8").tobytes())
        f.write(np.ascontiguousarray(s.surpluses, dtype="<f8").tobytes())


def load_surrogate(path) -> Surrogate:
    with open(path, "rb") as f:
        if f.read(len(_MAGIC)) != _MAGIC:
            raise SparseGridError(f"{path} is not a surrogate file")
        n = int.from_bytes(f.read(8), "little")
        h = json.loads(f.read(n).decode())
        d, nn, vl = h["d"], h["n_nodes"], h["vector_length"]
        idx = np.frombuffer(f.read(8 * nn * d), dtype="<i8").reshape(nn, d)
        pos = np.frombuffer(f.read(8 * nn * d), dtype="<i8").reshape(nn, d)
        sur = np.frombuffer(f.read(8 * nn * vl), dtype="<f8").reshape(nn, vl)
    coords = np.empty((nn, d))
    for p in range(d):
        for i in np.unique(idx[:, p]):
            sel = idx[:, p] == i
            coords[sel, p] = chebyshev_nodes(xi(int(i)))[pos[sel, p]]
    return Surrogate(d=d, level=h["level"], box=np.asarray(h["box"]),
                     indices=idx.copy(), positions=pos.copy(),
                     nodes_unit=coords, surpluses=sur.copy(),
                     mesh_digest=h["mesh_digest"], failures=h["failures"])


def write_manifest(s: Surrogate, path, build_seconds: float | None = None,
                   eval_calls: int | None = None) -> None:
    """Human-readable sidecar for audit; timing lines are advisory only."""
    lines = [
        "surrogate manifest",
        f"dimension: {s.d}",
        f"level: {s.level}",
        f"nodes: {s.n_nodes}",
        f"vector length: {s.vector_length}",
        f"mesh digest: {s.mesh_digest}",
        f"failed nodes: {len(s.failures)}" +
        (f" {s.failures}" if s.failures else ""),
    ]
    for p, (a, b) in enumerate(s.box):
        lines.append(f"box[{p}]: [{a:.17g}, {b:.17g}]")
    if eval_calls is not None:
        lines.append(f"evaluator calls: {eval_calls}")
    if build_seconds is not None:
        lines.append(f"build seconds: {build_seconds:.3f}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def surrogate_digest(s: Surrogate) -> str:
    """Content hash of the numeric payload (order-sensitive)."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(s.indices, dtype="<i8").tobytes())
    h.update(np.ascontiguousarray(s.surpluses, dtype="<f8").tobytes())
    return h.hexdigest()
