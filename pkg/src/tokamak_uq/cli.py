"""Command line front end.

One binary, six subcommands: `solve` runs the free-boundary equilibrium
for the configured currents and writes the field plus a feature report,
`build-surrogate` and `refine-surrogate` manage the sparse-grid
interpolant, `mc` runs a Monte Carlo campaign with either evaluator,
`compare` tabulates surrogate-vs-direct field errors per level, and
`report` re-renders text and figures from stored campaign output.

Exit codes are a stable contract: 0 success, 1 usage, 2 input error,
3 numerical non-convergence.  Reruns with the same config and seed
produce byte-identical numeric artifacts; wall-clock timings go to a
separate sidecar so hashed content stays stable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import CampaignConfig, ConfigError, load_config
from .fields import FEATURE_FIELDS, FieldAnalyzer, FieldError, feature_record
from .geometry import GeometryError
from .mesh import MeshError, read_field_csv, write_field_csv, write_field_vtk
from .pipeline import (DirectEvaluator, SurrogateEvaluator, common_mesh,
                       mesh_digest, surrogate_node_function, vessel_restriction)
from .solver import SolverError
from .sparsegrid import (SparseGridError, build_surrogate, eval_surrogate,
                         load_surrogate, refine_level, save_surrogate,
                         surrogate_digest, write_manifest)
from .uq import (FEATURE_GROUPS, NoiseModel, UQError, mc_report_digest,
                 run_mc, sample_currents, sample_rng)
from .svgplot import contour_figure, scatter_figure

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _fmt(x) -> str:
    return format(float(x), ".17g")


class CliError(Exception):
    """Input-level problem; message goes to stderr, exit code 2."""


class NumericError(Exception):
    """Numerical failure; message goes to stderr, exit code 3."""


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors by default; the contract says 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
    if v < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return v


def _fraction(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError("must lie in (0, 1)")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tokamak-uq",
                description="Free-boundary equilibrium solves, sparse-grid "
                            "surrogates and Monte Carlo campaigns.")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        q = sub.add_parser(name, help=help_text)
        q.add_argument("--config", required=True, help="campaign JSON file")
        q.add_argument("--seed", type=_nonneg_int, help="override RNG seed")
        q.add_argument("--level", type=_nonneg_int, help="override surrogate level")
        q.add_argument("--noise", type=_fraction,
                       help="override relative current noise fraction")
        q.add_argument("--evaluator", choices=("direct", "surrogate"),
                       help="override campaign evaluator")
        q.add_argument("--jobs", type=_nonneg_int,
                       help="worker threads (default: TOKAMAK_UQ_THREADS or config)")
        q.add_argument("--out", help="override output directory")
        return q

    add("solve", "run one free-boundary solve and write field artifacts")
    add("build-surrogate", "direct solves at all sparse-grid nodes")
    add("refine-surrogate", "extend an existing surrogate upward in level")
    q = add("mc", "Monte Carlo campaign with dynamic stopping")
    q.add_argument("--max-samples", type=_nonneg_int, dest="max_samples",
                   help="override sample budget")
    q = add("compare", "surrogate-vs-direct mean relative field errors per level")
    q.add_argument("--samples", type=_nonneg_int, default=100,
                   help="shared random sample count (default 100)")
    add("report", "re-render report text and figures from stored output")
    return p


def _resolve_config(args) -> CampaignConfig:
    cfg = load_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.level is not None:
        updates["surrogate_level"] = args.level
    if args.noise is not None:
        updates["noise_fraction"] = args.noise
    if args.evaluator is not None:
        updates["evaluator"] = args.evaluator
    if args.jobs is not None:
        updates["jobs"] = args.jobs
    else:
        env = os.environ.get("TOKAMAK_UQ_THREADS")
        if env is not None:
            try:
                jobs = int(env)
            except ValueError:
                raise CliError(f"TOKAMAK_UQ_THREADS is not an integer: {env!r}")
            if jobs < 0:
                raise CliError("TOKAMAK_UQ_THREADS must be >= 0")
            updates["jobs"] = jobs
    if args.out is not None:
        updates["out_dir"] = Path(args.out)
    if getattr(args, "max_samples", None) is not None:
        if args.max_samples < 1:
            raise CliError("--max-samples must be >= 1")
        updates["max_samples"] = args.max_samples
        updates["batch"] = min(cfg.batch, args.max_samples)
    return dataclasses.replace(cfg, **updates) if updates else cfg


def _out_dir(cfg: CampaignConfig) -> Path:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    return cfg.out_dir


def _surrogate_path(cfg: CampaignConfig) -> Path:
    return cfg.surrogate_path if cfg.surrogate_path is not None \
        else cfg.out_dir / "surrogate.bin"


def _counting(fn):
    calls = [0]

    def wrapped(point):
        calls[0] += 1
        return fn(point)
    return wrapped, calls


# ---------------------------------------------------------------- solve

def cmd_solve(cfg: CampaignConfig) -> int:
    g = cfg.geometry()
    ev = DirectEvaluator(g, cfg.mesh(), cfg.profile, cfg.solver,
                         R=cfg.refinements)
    sol = ev.solve(cfg.current_vector())
    if not sol.converged:
        res = sol.residual_history[-1] if sol.residual_history else []
        last = _fmt(res[-1]) if res else "n/a"
        print(f"solve failed: {sol.failure or 'unknown'} "
              f"(iterations {sol.iterations}, last update norm {last})",
              file=sys.stderr)
        return EXIT_NUMERIC

    out = _out_dir(cfg)
    analysis = sol.analysis
    rec = feature_record(sol.field, g, analysis)

    write_field_vtk(sol.field, out / "solution.vtk")
    write_field_csv(sol.field, out / "solution.csv")

    with open(out / "features.csv", "w") as f:
        f.write(",".join(FEATURE_FIELDS) + "\n")
        f.write(",".join(v if isinstance(v, str) else _fmt(v)
                         for v in rec.to_row()) + "\n")

    (out / "equilibrium.svg").write_text(
        contour_figure(g, sol.field, psi_bd=analysis.boundary.psi_bd,
                       boundary=analysis.boundary))

    lines = [
        "equilibrium solve",
        f"converged: {sol.converged}",
        f"boundary type: {rec.boundary_type}",
        f"iterations per level: {sol.iterations}",
        f"final update norm: {_fmt(sol.residual_history[-1][-1])}",
        f"psi axis: {_fmt(rec.psi_ma)}",
        f"psi boundary: {_fmt(rec.psi_bd)}",
        f"magnetic axis: ({_fmt(rec.axis_x)}, {_fmt(rec.axis_y)})",
    ]
    if math.isfinite(rec.xpoint_x):
        lines.append(f"x-point: ({_fmt(rec.xpoint_x)}, {_fmt(rec.xpoint_y)})")
    if rec.n_strike:
        lines.append(f"strike points: ({_fmt(rec.strike1_x)}, {_fmt(rec.strike1_y)})"
                     f" ({_fmt(rec.strike2_x)}, {_fmt(rec.strike2_y)})")
    if math.isfinite(rec.contact_x):
        lines.append(f"limiter contact: ({_fmt(rec.contact_x)}, {_fmt(rec.contact_y)})")
    if math.isfinite(rec.r_geo):
        lines.append(f"geometric radius: {_fmt(rec.r_geo)}")
        lines.append(f"minor radius: {_fmt(rec.a_minor)}")
        lines.append(f"aspect ratio inverse: {_fmt(rec.eps)}")
        lines.append(f"elongation: {_fmt(rec.kappa_e)}")
        lines.append(f"triangularity upper: {_fmt(rec.delta_u)}")
        lines.append(f"triangularity lower: {_fmt(rec.delta_l)}")
    (out / "solve_report.txt").write_text("\n".join(lines) + "\n")

    print(f"solve: {rec.boundary_type}, iterations {sol.iterations}, "
          f"artifacts in {out}")
    return EXIT_OK


# ------------------------------------------------------- build-surrogate

def _build_to_level(cfg: CampaignConfig, target: int, base=None):
    """Shared core of build and refine; returns (surrogate, calls, seconds)."""
    g = cfg.geometry()
    ev = DirectEvaluator(g, cfg.mesh(), cfg.profile, cfg.solver,
                         R=cfg.refinements)
    nm = NoiseModel(reference=cfg.current_vector(), fraction=cfg.noise_fraction,
                    vary=cfg.vary_coils)
    fn, calls = _counting(surrogate_node_function(ev, nm))
    t0 = time.perf_counter()
    if base is None:
        s = build_surrogate(fn, d=nm.d, level=target, box=nm.box,
                            jobs=cfg.jobs, mesh_digest=mesh_digest(ev.sub))
    else:
        s = base
        while s.level < target:
            s = refine_level(s, fn, jobs=cfg.jobs)
    return s, calls[0], time.perf_counter() - t0


def _check_box(s, cfg: CampaignConfig):
    nm = NoiseModel(reference=cfg.current_vector(), fraction=cfg.noise_fraction,
                    vary=cfg.vary_coils)
    if s.d != nm.d or not np.allclose(s.box, nm.box, rtol=1e-12, atol=0.0):
        raise CliError("stored surrogate box does not match the campaign's "
                       "varied coils and noise fraction")


def cmd_build_surrogate(cfg: CampaignConfig) -> int:
    out = _out_dir(cfg)
    s, calls, dt = _build_to_level(cfg, cfg.surrogate_level)
    path = _surrogate_path(cfg)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_surrogate(s, path)
    write_manifest(s, out / "surrogate_manifest.txt",
                   build_seconds=dt, eval_calls=calls)
    flag = f", failed nodes {list(s.failures)}" if s.failures else ""
    print(f"surrogate: d={s.d} level={s.level} nodes={s.n_nodes} "
          f"({calls} solves, {dt:.1f}s){flag} -> {path}")
    return EXIT_OK


def cmd_refine_surrogate(cfg: CampaignConfig, target=None) -> int:
    path = _surrogate_path(cfg)
    if not path.is_file():
        raise CliError(f"surrogate file not found: {path}")
    s = load_surrogate(path)
    _check_box(s, cfg)
    want = target if target is not None else s.level + 1
    if want <= s.level:
        raise CliError(f"surrogate is already at level {s.level}; "
                       f"requested {want}")
    out = _out_dir(cfg)
    s, calls, dt = _build_to_level(cfg, want, base=s)
    save_surrogate(s, path)
    write_manifest(s, out / "surrogate_manifest.txt",
                   build_seconds=dt, eval_calls=calls)
    flag = f", failed nodes {list(s.failures)}" if s.failures else ""
    print(f"surrogate refined to level {s.level}: nodes={s.n_nodes} "
          f"({calls} new solves, {dt:.1f}s){flag} -> {path}")
    return EXIT_OK


# ------------------------------------------------------------------- mc

def _make_evaluator(cfg: CampaignConfig):
    g = cfg.geometry()
    coarse = cfg.mesh()
    if cfg.evaluator == "direct":
        return DirectEvaluator(g, coarse, cfg.profile, cfg.solver,
                               R=cfg.refinements), g
    path = _surrogate_path(cfg)
    if not path.is_file():
        raise CliError(f"evaluator is 'surrogate' but no surrogate file "
                       f"at {path}; run build-surrogate first")
    s = load_surrogate(path)
    _check_box(s, cfg)
    common = common_mesh(coarse, cfg.refinements)
    try:
        return SurrogateEvaluator(s, cfg.vary_coils, g, common), g
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _campaign_payload(r, labels) -> dict:
    stats = {}
    for grp in FEATURE_GROUPS:
        c, m, v = r.feature_stats[grp]
        stats[grp] = {"count": int(c),
                      "mean": np.asarray(m, dtype=float).tolist(),
                      "variance": np.asarray(v, dtype=float).tolist()}
    return {
        "n_samples": int(r.n_samples),
        "seed": int(r.seed),
        "stop_eps": float(r.stop_eps),
        "batch": int(r.batch),
        "converged": bool(r.converged),
        "eps_history": [float(e) for e in r.eps_history],
        "frequencies": {k: int(v) for k, v in sorted(r.frequencies.items())},
        "feature_stats": stats,
        "annulus": {
            "radii": [float(x) for x in r.annulus_radii],
            "counts": [int(c) for c in r.annulus_counts],
            "beyond": int(r.annulus_beyond),
            "reference": (None if r.annulus_reference is None
                          else [float(x) for x in r.annulus_reference]),
        },
        "labels": list(labels),
        "kinds": list(r.kinds),
        "currents": np.asarray(r.currents, dtype=float).tolist(),
        "features": np.asarray(r.features, dtype=float).tolist(),
        "digest": mc_report_digest(r),
    }


_GROUP_LABELS = {
    "xpoint": ["xpoint_x", "xpoint_y"],
    "axis": ["axis_x", "axis_y"],
    "strikes": ["strike_in_x", "strike_in_y", "strike_out_x", "strike_out_y"],
    "shaping": ["r_geo", "a_minor", "eps", "kappa_e", "delta_u", "delta_l"],
}


def _render_mc_report(c: dict) -> str:
    lines = [
        "monte carlo campaign",
        f"samples: {c['n_samples']}",
        f"seed: {c['seed']}",
        f"batch size: {c['batch']}",
        f"stopping threshold: {_fmt(c['stop_eps'])}",
        f"converged: {c['converged']}",
        "margin history: " + " ".join(_fmt(e) for e in c["eps_history"]),
        "",
        "boundary kinds:",
    ]
    n = max(c["n_samples"], 1)
    for kind, count in c["frequencies"].items():
        lines.append(f"  {kind}: {count} ({100.0 * count / n:.2f}%)")
    lines.append("")
    lines.append("feature statistics (count, mean, std):")
    for grp in FEATURE_GROUPS:
        st = c["feature_stats"][grp]
        cnt = st["count"]
        lines.append(f"  {grp} [{cnt} samples]")
        for lab, m, v in zip(_GROUP_LABELS[grp], st["mean"], st["variance"]):
            std = math.sqrt(v) if v == v and v >= 0.0 else float("nan")
            lines.append(f"    {lab}: {_fmt(m)} (std {_fmt(std)})")
    an = c["annulus"]
    lines.append("")
    if an["reference"] is not None:
        lines.append("x-point scatter around ("
                     + _fmt(an["reference"][0]) + ", "
                     + _fmt(an["reference"][1]) + "):")
        total = sum(an["counts"]) + an["beyond"]
        total = max(total, 1)
        r1, r2, r3 = an["radii"]
        c1, c2, c3 = an["counts"]
        lines.append(f"  within {_fmt(r1)}: {c1} ({100.0 * c1 / total:.2f}%)")
        lines.append(f"  within ({_fmt(r1)}, {_fmt(r2)}]: {c2} "
                     f"({100.0 * c2 / total:.2f}%)")
        lines.append(f"  within ({_fmt(r2)}, {_fmt(r3)}]: {c3} "
                     f"({100.0 * c3 / total:.2f}%)")
        lines.append(f"  beyond {_fmt(r3)}: {an['beyond']} "
                     f"({100.0 * an['beyond'] / total:.2f}%)")
    else:
        lines.append("x-point scatter: no reference point available")
    lines.append("")
    lines.append(f"content digest: {c['digest']}")
    return "\n".join(lines) + "\n"


def _render_features_csv(c: dict) -> str:
    d_full = len(c["currents"][0]) if c["currents"] else 0
    header = ["sample", "kind"] + c["labels"] + \
        [f"current_{i + 1}" for i in range(d_full)]
    rows = [",".join(header)]
    for i, (kind, feats, cur) in enumerate(
            zip(c["kinds"], c["features"], c["currents"])):
        rows.append(",".join([str(i), kind]
                             + [_fmt(v) for v in feats]
                             + [_fmt(v) for v in cur]))
    return "\n".join(rows) + "\n"


def _render_scatter(g, c: dict) -> str:
    feats = np.asarray(c["features"], dtype=float).reshape(-1, 14)
    lab = c["labels"]

    def cloud(names):
        cols = [lab.index(nm) for nm in names]
        pts = feats[:, cols]
        return pts[np.all(np.isfinite(pts), axis=1)]

    clouds = {}
    xp = cloud(["xpoint_x", "xpoint_y"])
    if len(xp):
        clouds["xpoint"] = xp
    ax = cloud(["axis_x", "axis_y"])
    if len(ax):
        clouds["axis"] = ax
    st = np.vstack([cloud(["strike_in_x", "strike_in_y"]),
                    cloud(["strike_out_x", "strike_out_y"])])
    if len(st):
        clouds["strike"] = st
    ref = c["annulus"]["reference"]
    refs = {"xpoint": np.asarray(ref, dtype=float)} if ref is not None else None
    return scatter_figure(g, clouds, refs)


def cmd_mc(cfg: CampaignConfig) -> int:
    evaluator, g = _make_evaluator(cfg)
    nm = NoiseModel(reference=cfg.current_vector(), fraction=cfg.noise_fraction,
                    vary=cfg.vary_coils)

    ref_sample = evaluator(cfg.current_vector())
    annulus_ref = ref_sample.xpoint if ref_sample.ok else None
    if not ref_sample.ok:
        print(f"note: reference solve did not produce a confined equilibrium "
              f"({ref_sample.kind}); annulus statistics disabled",
              file=sys.stderr)

    t0 = time.perf_counter()
    r = run_mc(evaluator, nm, stop_eps=cfg.stop_eps, batch=cfg.batch,
               max_samples=cfg.max_samples, seed=cfg.seed, radii=cfg.radii,
               annulus_reference=annulus_ref, jobs=cfg.jobs)
    total = time.perf_counter() - t0

    out = _out_dir(cfg)
    payload = _campaign_payload(r, r.feature_row_labels())
    (out / "mc_campaign.json").write_text(
        json.dumps(payload, indent=1, sort_keys=True) + "\n")
    (out / "mc_report.txt").write_text(_render_mc_report(payload))
    (out / "mc_features.csv").write_text(_render_features_csv(payload))
    (out / "mc_scatter.svg").write_text(_render_scatter(g, payload))
    timing = {
        "evaluator": cfg.evaluator,
        "n_samples": int(r.n_samples),
        "total_seconds": total,
        "mean_sample_seconds": float(np.mean(r.sample_seconds))
        if len(r.sample_seconds) else None,
    }
    (out / "mc_timing.json").write_text(json.dumps(timing, indent=1) + "\n")

    print(f"mc: {r.n_samples} samples ({cfg.evaluator}), "
          f"converged={r.converged}, "
          f"margin {_fmt(r.eps_history[-1]) if r.eps_history else 'n/a'}, "
          f"artifacts in {out}")
    if not r.converged:
        print(f"campaign did not reach stopping threshold "
              f"{_fmt(cfg.stop_eps)} within {cfg.max_samples} samples",
              file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


# -------------------------------------------------------------- compare

def cmd_compare(cfg: CampaignConfig, n_samples: int) -> int:
    if n_samples == 0:
        raise CliError("empty sample set")
    g = cfg.geometry()
    ev = DirectEvaluator(g, cfg.mesh(), cfg.profile, cfg.solver,
                         R=cfg.refinements)
    nm = NoiseModel(reference=cfg.current_vector(), fraction=cfg.noise_fraction,
                    vary=cfg.vary_coils)

    points, fields = [], []
    failed = 0
    for j in range(n_samples):
        I = sample_currents(nm, sample_rng(cfg.seed, j))
        vec = ev.field_vector(I)
        if vec is None:
            failed += 1
            continue
        points.append(np.asarray(I.values, dtype=float)[list(cfg.vary_coils)])
        fields.append(vec)
    if not fields:
        print("compare: every direct solve in the sample set failed",
              file=sys.stderr)
        return EXIT_NUMERIC
    if failed:
        print(f"note: {failed} of {n_samples} direct solves failed and were "
              f"dropped from the error average", file=sys.stderr)

    fn = surrogate_node_function(ev, nm)
    digest = mesh_digest(ev.sub)
    rows = []
    s = None
    for level in range(cfg.surrogate_level + 1):
        s = build_surrogate(fn, d=nm.d, level=0, box=nm.box,
                            jobs=cfg.jobs, mesh_digest=digest) if s is None \
            else refine_level(s, fn, jobs=cfg.jobs)
        errs = [np.abs(eval_surrogate(s, p) - f).max() / np.abs(f).max()
                for p, f in zip(points, fields)]
        rows.append((level, s.n_nodes, float(np.mean(errs))))

    out = _out_dir(cfg)
    with open(out / "compare.csv", "w") as f:
        f.write("level,nodes,E\n")
        for level, nodes, err in rows:
            f.write(f"{level},{nodes},{_fmt(err)}\n")

    print(f"mean relative field error over {len(fields)} samples:")
    for level, nodes, err in rows:
        print(f"  level {level} ({nodes} nodes): E = {err:.3e}")
    print(f"table written to {out / 'compare.csv'}")
    return EXIT_OK


# --------------------------------------------------------------- report

def cmd_report(cfg: CampaignConfig) -> int:
    out = cfg.out_dir
    g = cfg.geometry()
    produced = []

    campaign = out / "mc_campaign.json"
    if campaign.is_file():
        payload = json.loads(campaign.read_text())
        (out / "mc_report.txt").write_text(_render_mc_report(payload))
        (out / "mc_features.csv").write_text(_render_features_csv(payload))
        (out / "mc_scatter.svg").write_text(_render_scatter(g, payload))
        produced += ["mc_report.txt", "mc_features.csv", "mc_scatter.svg"]

    solution = out / "solution.csv"
    if solution.is_file():
        common = common_mesh(cfg.mesh(), cfg.refinements)
        f = read_field_csv(solution, common)
        analysis = FieldAnalyzer(common, g).analyze(f)
        (out / "equilibrium.svg").write_text(
            contour_figure(g, f, psi_bd=analysis.boundary.psi_bd,
                           boundary=analysis.boundary))
        produced.append("equilibrium.svg")

    if not produced:
        raise CliError(f"nothing to report: neither {campaign} nor "
                       f"{solution} exists; run mc or solve first")
    print("report: regenerated " + ", ".join(produced) + f" in {out}")
    return EXIT_OK


# ----------------------------------------------------------------- main

def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve_config(args)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "build-surrogate":
            return cmd_build_surrogate(cfg)
        if args.command == "refine-surrogate":
            return cmd_refine_surrogate(cfg, target=args.level)
        if args.command == "mc":
            return cmd_mc(cfg)
        if args.command == "compare":
            return cmd_compare(cfg, args.samples)
        if args.command == "report":
            return cmd_report(cfg)
        parser.error(f"unknown command {args.command!r}")
    except (ConfigError, CliError, GeometryError, MeshError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, SparseGridError, UQError,
            FieldError, NumericError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
