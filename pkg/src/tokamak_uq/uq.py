"""Monte Carlo campaigns over coil-current uncertainty.

Currents are drawn uniformly from a box centered on the reference vector,
each sample through its own counter-based substream so parallel evaluation
cannot change the draw sequence. Statistics run through Welford's online
recurrences; a campaign stops once the 95% margin of error of the monitored
nodal field, normalized by its mean, falls below the requested threshold.
"""

from __future__ import annotations

import hashlib
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .geometry import CurrentVector

Z_STAR = 1.96                       # 95% two-sided normal quantile
FEATURE_GROUPS = ("xpoint", "axis", "strikes", "shaping")
FEATURE_WIDTH = {"xpoint": 2, "axis": 2, "strikes": 4, "shaping": 6}


class UQError(ValueError):
    pass


# ---------------------------------------------------------------------------
# noise model and sampling

@dataclass(frozen=True)
class NoiseModel:
    """Uniform coil-current uncertainty: per-dim interval I_i +/- p|I_i|.

    `vary` restricts the perturbation to a subset of coils (0-based); the
    remaining currents stay frozen at their reference values.
    """
    reference: CurrentVector
    fraction: float
    vary: Optional[tuple] = None

    def __post_init__(self):
        if self.fraction < 0.0:
            raise UQError("noise fraction must be >= 0")
        if self.vary is not None:
            v = tuple(int(i) for i in self.vary)
            if len(set(v)) != len(v) or not v:
                raise UQError("vary must be a nonempty set of coil indices")
            if min(v) < 0 or max(v) >= len(self.reference.values):
                raise UQError("vary index outside the current vector")
            object.__setattr__(self, "vary", v)

    @property
    def dims(self) -> tuple:
        return self.vary if self.vary is not None else tuple(
            range(len(self.reference.values)))

    @property
    def d(self) -> int:
        return len(self.dims)

    @property
    def box(self) -> np.ndarray:
        """(d, 2) bounds over the varied dimensions, reference at center."""
        ref = self.reference.values[list(self.dims)]
        half = self.fraction * np.abs(ref)
        return np.column_stack([ref - half, ref + half])

    def embed(self, varied_values) -> CurrentVector:
        """Full current vector with the varied dims replaced."""
        full = self.reference.values.copy()
        full[list(self.dims)] = np.asarray(varied_values, dtype=float)
        return CurrentVector(full)


def sample_rng(seed: int, k: int) -> np.random.Generator:
    """Substream k of the campaign: Philox keyed on (seed, sample index)."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, k], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def sample_currents(nm: NoiseModel, rng: np.random.Generator) -> CurrentVector:
    """One uniform draw from the noise box."""
    box = nm.box
    u = rng.random(nm.d)
    return nm.embed(box[:, 0] + u * (box[:, 1] - box[:, 0]))


# ---------------------------------------------------------------------------
# Welford statistics

@dataclass
class WelfordState:
    k: int = 0
    m: Optional[np.ndarray] = None
    s: Optional[np.ndarray] = None

    def mean(self) -> np.ndarray:
        if self.k < 1:
            raise UQError("no samples accumulated")
        return self.m

    def variance(self) -> np.ndarray:
        """Sample variance s_k/(k-1)."""
        if self.k < 2:
            raise UQError("variance needs k >= 2")
        return self.s / (self.k - 1)

    def std(self) -> np.ndarray:
        return np.sqrt(self.variance())


def welford_update(w: WelfordState, x) -> WelfordState:
    """m_k = m_{k-1} + (x - m_{k-1})/k; s_k = s_{k-1} + (x - m_{k-1})(x - m_k)."""
    x = np.asarray(x, dtype=float)
    if w.k == 0:
        return WelfordState(1, x.copy(), np.zeros_like(x))
    if x.shape != w.m.shape:
        raise UQError("sample dimension changed mid-stream")
    k = w.k + 1
    d0 = x - w.m
    m = w.m + d0 / k
    s = w.s + d0 * (x - m)
    return WelfordState(k, m, s)


def welford_merge(a: WelfordState, b: WelfordState) -> WelfordState:
    """Chan's parallel combination of two disjoint streams."""
    if a.k == 0:
        return WelfordState(b.k, None if b.m is None else b.m.copy(),
                            None if b.s is None else b.s.copy())
    if b.k == 0:
        return WelfordState(a.k, a.m.copy(), a.s.copy())
    k = a.k + b.k
    d = b.m - a.m
    m = a.m + d * (b.k / k)
    s = a.s + b.s + d * d * (a.k * b.k / k)
    return WelfordState(k, m, s)


def margin_of_error(w: WelfordState, floor_scale: float = 1e-3):
    """Componentwise eps = 1.96 S/sqrt(k), plus the normalized campaign scalar.

    Each component's eps is divided by max(|mean|, floor_scale * max|mean|)
    before the max is taken, so the scalar reads as a relative error.
    """
    if w.k < 2:
        raise UQError("margin of error needs k >= 2")
    eps = Z_STAR * w.std() / np.sqrt(w.k)
    scale = np.maximum(np.abs(w.m), floor_scale * max(np.abs(w.m).max(), 1e-300))
    return eps, float((eps / scale).max())


# ---------------------------------------------------------------------------
# evaluation records and campaign loop

@dataclass
class EvalSample:
    """One evaluator result: monitored field plus extracted features.

    `psi` is the nodal field on the common-mesh vessel vertices, or None when
    the sample failed (no confinement or solver breakdown). Feature arrays may
    be None when the state does not carry them (no strikes on a limited
    plasma, say).
    """
    kind: str
    psi: Optional[np.ndarray] = None
    xpoint: Optional[np.ndarray] = None
    axis: Optional[np.ndarray] = None
    strikes: Optional[np.ndarray] = None     # flattened (4,): inner xz, outer xz
    shaping: Optional[np.ndarray] = None     # r_geo, a_minor, eps, kappa, du, dl

    @property
    def ok(self) -> bool:
        return self.psi is not None

    def group(self, name: str):
        v = getattr(self, name)
        if v is None:
            return None
        v = np.asarray(v, dtype=float).ravel()
        return v if len(v) == FEATURE_WIDTH[name] else None


@dataclass(eq=False)
class McReport:
    n_samples: int
    seed: int
    stop_eps: float
    batch: int
    converged: bool
    eps_history: list                    # campaign scalar after each batch
    frequencies: dict                    # boundary kind -> count
    feature_stats: dict                  # group -> (count, mean, variance)
    annulus_radii: tuple
    annulus_counts: tuple                # within r1, (r1,r2], (r2,r3]
    annulus_beyond: int
    annulus_reference: Optional[np.ndarray]
    currents: np.ndarray                 # (n, d_full) sampled current vectors
    kinds: list                          # per-sample boundary kind
    features: np.ndarray                 # (n, 14) per-sample rows, NaN-padded
    sample_seconds: np.ndarray = field(compare=False, default=None)

    def feature_row_labels(self):
        return ["xpoint_x", "xpoint_y", "axis_x", "axis_y",
                "strike_in_x", "strike_in_y", "strike_out_x", "strike_out_y",
                "r_geo", "a_minor", "eps", "kappa_e", "delta_u", "delta_l"]


def mc_report_digest(r: McReport) -> str:
    """Hash of the deterministic numeric content (timings excluded)."""
    h = hashlib.sha256()
    h.update(str((r.n_samples, r.seed, r.stop_eps, r.batch, r.converged,
                  r.frequencies, r.annulus_radii, r.annulus_counts,
                  r.annulus_beyond, tuple(r.kinds))).encode())
    h.update(np.asarray(r.eps_history, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(r.currents, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(r.features, dtype="<f8").tobytes())
    for g in FEATURE_GROUPS:
        c, m, v = r.feature_stats[g]
        h.update(str(c).encode())
        h.update(np.ascontiguousarray(m, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(v, dtype="<f8").tobytes())
    return h.hexdigest()


def annulus_counts(points, ref, radii):
    """Counts of points at distance within [0,r1], (r1,r2], (r2,r3] of ref.

    Returns (counts, beyond, frequencies); frequencies are relative to the
    total point count, matching how concentration tables are usually read.
    """
    r1, r2, r3 = (float(r) for r in radii)
    if not r1 < r2 < r3:
        raise UQError("annulus radii must be strictly ascending")
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return (0, 0, 0), 0, (0.0, 0.0, 0.0)
    dist = np.hypot(pts[:, 0] - ref[0], pts[:, 1] - ref[1])
    c1 = int(np.count_nonzero(dist <= r1))
    c2 = int(np.count_nonzero((dist > r1) & (dist <= r2)))
    c3 = int(np.count_nonzero((dist > r2) & (dist <= r3)))
    beyond = n - c1 - c2 - c3
    return (c1, c2, c3), beyond, (c1 / n, c2 / n, c3 / n)


def _feature_row(s: EvalSample) -> np.ndarray:
    row = np.full(14, np.nan)
    off = 0
    for g in FEATURE_GROUPS:
        v = s.group(g)
        w = FEATURE_WIDTH[g]
        if v is not None:
            row[off:off + w] = v
        off += w
    return row


def run_mc(evaluator: Callable[[CurrentVector], EvalSample],
           nm: NoiseModel, stop_eps: float, batch: int = 100,
           max_samples: int = 10000, seed: int = 0,
           radii=(0.032, 0.048, 0.064), annulus_reference=None,
           jobs: int = 0) -> McReport:
    """Batched Monte Carlo with dynamic stopping.

    Samples arrive in batches; the Welford state of the monitored nodal field
    grows by a deterministic in-order fold per batch followed by a stream
    merge, so the result is independent of evaluation parallelism. Failed
    samples are counted under their own kind and skipped by the statistics.
    """
    if stop_eps <= 0.0:
        raise UQError("stop_eps must be positive")
    if batch < 1:
        raise UQError("batch must be >= 1")
    psi_state = WelfordState()
    group_states = {g: WelfordState() for g in FEATURE_GROUPS}
    freqs: dict = {}
    eps_history = []
    currents, kinds, rows, seconds, xpts = [], [], [], [], []
    converged = False
    k = 0
    while k < max_samples and not converged:
        nb = min(batch, max_samples - k)
        draws = [sample_currents(nm, sample_rng(seed, k + j)) for j in range(nb)]

        def timed(I):
            t0 = time.perf_counter()
            out = evaluator(I)
            return out, time.perf_counter() - t0

        if jobs and jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as ex:
                results = list(ex.map(timed, draws))
        else:
            results = [timed(I) for I in draws]

        batch_state = WelfordState()
        for I, (res, dt) in zip(draws, results):
            currents.append(I.values.copy())
            kinds.append(res.kind)
            seconds.append(dt)
            freqs[res.kind] = freqs.get(res.kind, 0) + 1
            rows.append(_feature_row(res))
            if res.ok:
                batch_state = welford_update(batch_state, res.psi)
                for g in FEATURE_GROUPS:
                    v = res.group(g)
                    if v is not None:
                        group_states[g] = welford_update(group_states[g], v)
                xp = res.group("xpoint")
                if xp is not None:
                    xpts.append(xp)
        psi_state = welford_merge(psi_state, batch_state)
        k += nb
        if psi_state.k >= 2:
            _, scalar = margin_of_error(psi_state)
            eps_history.append(scalar)
            if scalar <= stop_eps:
                converged = True
        elif psi_state.k == 1:
            # a single successful sample has no spread to estimate
            eps_history.append(0.0)
            converged = True

    stats = {}
    for g in FEATURE_GROUPS:
        st = group_states[g]
        if st.k >= 2:
            stats[g] = (st.k, st.mean().copy(), st.variance().copy())
        elif st.k == 1:
            stats[g] = (1, st.mean().copy(), np.zeros_like(st.m))
        else:
            w = FEATURE_WIDTH[g]
            stats[g] = (0, np.full(w, np.nan), np.full(w, np.nan))

    if annulus_reference is not None and xpts:
        cts, beyond, _ = annulus_counts(np.array(xpts), annulus_reference, radii)
    else:
        cts, beyond = (0, 0, 0), 0

    return McReport(
        n_samples=k, seed=seed, stop_eps=stop_eps, batch=batch,
        converged=converged, eps_history=eps_history, frequencies=freqs,
        feature_stats=stats, annulus_radii=tuple(float(r) for r in radii),
        annulus_counts=cts, annulus_beyond=beyond,
        annulus_reference=(None if annulus_reference is None
                           else np.asarray(annulus_reference, dtype=float)),
        currents=np.array(currents), kinds=kinds,
        features=np.array(rows).reshape(k, 14),
        sample_seconds=np.array(seconds),
    )


def mean_relative_error(approx: Callable, reference: Callable, samples) -> float:
    """Average relative sup-norm error of `approx` against `reference`."""
    samples = list(samples)
    if not samples:
        raise UQError("empty sample set")
    total = 0.0
    for I in samples:
        a = np.asarray(approx(I), dtype=float)
        b = np.asarray(reference(I), dtype=float)
        nb = float(np.abs(b).max())
        if nb == 0.0:
            raise UQError("reference field vanishes; relative error undefined")
        total += float(np.abs(a - b).max()) / nb
    return total / len(samples)
