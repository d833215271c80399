"""Campaign configuration: one JSON file describing a full study.

A campaign names the geometry and coarse mesh, fixes the current profile
and solver settings, and describes the uncertainty study (which coils
vary, noise fraction, sampling parameters, surrogate level).  Coil
indices in the file are 1-based to match the coil numbering used in the
geometry file; they are converted to 0-based positions on load.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .geometry import CurrentVector, GeometryError, ReactorGeometry, load_geometry
from .mesh import MeshError, TriMesh, read_mesh
from .solver import ProfileParams, SolverError, SolverOptions


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class CampaignConfig:
    geometry_path: Path
    mesh_path: Path
    currents: tuple
    profile: ProfileParams
    solver: SolverOptions
    refinements: int
    surrogate_level: int
    vary_coils: tuple          # 0-based coil positions
    surrogate_path: Optional[Path]
    noise_fraction: float
    seed: int
    stop_eps: float
    batch: int
    max_samples: int
    radii: tuple
    evaluator: str
    jobs: int
    out_dir: Path

    def geometry(self) -> ReactorGeometry:
        return load_geometry(self.geometry_path)

    def mesh(self) -> TriMesh:
        return read_mesh(self.mesh_path)

    def current_vector(self) -> CurrentVector:
        return CurrentVector(np.asarray(self.currents, dtype=float))


def _expect(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def _get(d: dict, key: str, default=None, required: bool = False):
    if key not in d:
        if required:
            raise ConfigError(f"missing required config key: {key!r}")
        return default
    return d[key]


def _number(v, key: str) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number, got {type(v).__name__}")
    f = float(v)
    if not np.isfinite(f):
        raise ConfigError(f"{key} must be finite")
    return f


def _integer(v, key: str) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key} must be an integer, got {type(v).__name__}")
    return v


def load_config(path, base_dir=None) -> CampaignConfig:
    """Parse and validate a campaign JSON file.

    Relative paths inside the file resolve against the file's own
    directory unless base_dir overrides that.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    root = Path(base_dir) if base_dir is not None else path.parent
    return parse_config(raw, root)


def parse_config(raw: dict, root: Path) -> CampaignConfig:
    def resolve(p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else root / q

    geometry_path = resolve(_get(raw, "geometry", required=True))
    mesh_path = resolve(_get(raw, "mesh", required=True))
    _expect(geometry_path.is_file(), f"geometry file not found: {geometry_path}")
    _expect(mesh_path.is_file(), f"mesh file not found: {mesh_path}")

    currents_raw = _get(raw, "currents", required=True)
    _expect(isinstance(currents_raw, list) and len(currents_raw) > 0,
            "currents must be a non-empty list")
    currents = tuple(_number(v, "currents[*]") for v in currents_raw)

    prof_raw = _get(raw, "profile", {})
    _expect(isinstance(prof_raw, dict), "profile must be an object")
    try:
        profile = ProfileParams(
            lambda_s=_number(_get(prof_raw, "lambda", required=True), "profile.lambda"),
            x0=_number(_get(prof_raw, "x0", required=True), "profile.x0"),
            alpha_p=_number(_get(prof_raw, "alpha", 2.0), "profile.alpha"),
            gamma_p=_number(_get(prof_raw, "gamma", 1.5), "profile.gamma"),
            beta_p=_number(_get(prof_raw, "beta", 0.5), "profile.beta"),
        )
    except SolverError as exc:
        raise ConfigError(f"bad profile parameters: {exc}") from exc

    sol_raw = _get(raw, "solver", {})
    _expect(isinstance(sol_raw, dict), "solver must be an object")
    center = _get(sol_raw, "guess_center")
    if center is not None:
        _expect(isinstance(center, list) and len(center) == 2,
                "solver.guess_center must be [x, y]")
        center = (_number(center[0], "guess_center.x"),
                  _number(center[1], "guess_center.y"))
    tol = _get(sol_raw, "tol_override")
    try:
        solver = SolverOptions(
            theta=_number(_get(sol_raw, "theta", 0.7), "solver.theta"),
            max_iter=_integer(_get(sol_raw, "max_iter", 50), "solver.max_iter"),
            tol_override=None if tol is None else _number(tol, "solver.tol_override"),
            marking_alpha=_number(_get(sol_raw, "marking_alpha", 0.05), "solver.marking_alpha"),
            guess_center=center,
            guess_a=None if _get(sol_raw, "guess_a") is None else _number(sol_raw["guess_a"], "solver.guess_a"),
            guess_b=None if _get(sol_raw, "guess_b") is None else _number(sol_raw["guess_b"], "solver.guess_b"),
            guess_k=_number(_get(sol_raw, "guess_k", 0.0), "solver.guess_k"),
        )
    except SolverError as exc:
        raise ConfigError(f"bad solver options: {exc}") from exc

    refinements = _integer(_get(sol_raw, "refinements", 0), "solver.refinements")
    _expect(refinements >= 0, "solver.refinements must be >= 0")

    sur_raw = _get(raw, "surrogate", {})
    _expect(isinstance(sur_raw, dict), "surrogate must be an object")
    surrogate_level = _integer(_get(sur_raw, "level", 2), "surrogate.level")
    _expect(surrogate_level >= 0, "surrogate.level must be >= 0")
    vary_raw = _get(sur_raw, "vary_coils", required=True)
    _expect(isinstance(vary_raw, list) and len(vary_raw) > 0,
            "surrogate.vary_coils must be a non-empty list")
    n = len(currents)
    vary = []
    for v in vary_raw:
        i = _integer(v, "surrogate.vary_coils[*]")
        _expect(1 <= i <= n, f"vary_coils entry {i} out of range 1..{n}")
        vary.append(i - 1)
    _expect(len(set(vary)) == len(vary), "vary_coils entries must be distinct")
    sur_path = _get(sur_raw, "path")
    surrogate_path = Path(sur_path) if sur_path is not None else None

    noise_raw = _get(raw, "noise", {})
    _expect(isinstance(noise_raw, dict), "noise must be an object")
    noise_fraction = _number(_get(noise_raw, "fraction", 0.01), "noise.fraction")
    _expect(0.0 < noise_fraction < 1.0, "noise.fraction must lie in (0, 1)")
    seed = _integer(_get(noise_raw, "seed", 0), "noise.seed")
    _expect(seed >= 0, "noise.seed must be >= 0")
    stop_eps = _number(_get(noise_raw, "stop_eps", 0.01), "noise.stop_eps")
    _expect(stop_eps > 0.0, "noise.stop_eps must be positive")
    batch = _integer(_get(noise_raw, "batch", 100), "noise.batch")
    _expect(batch >= 1, "noise.batch must be >= 1")
    max_samples = _integer(_get(noise_raw, "max_samples", 10000), "noise.max_samples")
    _expect(max_samples >= batch, "noise.max_samples must be >= batch")
    radii_raw = _get(noise_raw, "radii", [0.032, 0.048, 0.064])
    _expect(isinstance(radii_raw, list) and len(radii_raw) == 3,
            "noise.radii must be a list of three values")
    radii = tuple(_number(v, "noise.radii[*]") for v in radii_raw)
    _expect(0.0 < radii[0] < radii[1] < radii[2],
            "noise.radii must be positive and strictly increasing")

    evaluator = _get(raw, "evaluator", "direct")
    _expect(evaluator in ("direct", "surrogate"),
            f"evaluator must be 'direct' or 'surrogate', got {evaluator!r}")
    jobs = _integer(_get(raw, "jobs", 0), "jobs")
    _expect(jobs >= 0, "jobs must be >= 0")
    # inputs resolve against the config file, outputs against the
    # invocation directory so packaged configs stay read-only
    out_dir = Path(_get(raw, "out", "out"))

    cfg = CampaignConfig(
        geometry_path=geometry_path,
        mesh_path=mesh_path,
        currents=currents,
        profile=profile,
        solver=solver,
        refinements=refinements,
        surrogate_level=surrogate_level,
        vary_coils=tuple(vary),
        surrogate_path=surrogate_path,
        noise_fraction=noise_fraction,
        seed=seed,
        stop_eps=stop_eps,
        batch=batch,
        max_samples=max_samples,
        radii=radii,
        evaluator=evaluator,
        jobs=jobs,
        out_dir=out_dir,
    )
    validate_against_geometry(cfg)
    return cfg


def validate_against_geometry(cfg: CampaignConfig):
    """Cross-checks that need the geometry and mesh actually opened."""
    try:
        g = cfg.geometry()
    except (GeometryError, OSError) as exc:
        raise ConfigError(f"cannot load geometry: {exc}") from exc
    if g.n_coils != len(cfg.currents):
        raise ConfigError(
            f"currents has {len(cfg.currents)} entries but geometry has {g.n_coils} coils")
    for i in cfg.vary_coils:
        if abs(cfg.currents[i]) == 0.0:
            raise ConfigError(
                f"coil {i + 1} is selected to vary but its current is zero; "
                "relative noise on a zero current is degenerate")
    try:
        cfg.mesh()
    except (MeshError, OSError) as exc:
        raise ConfigError(f"cannot load mesh: {exc}") from exc
