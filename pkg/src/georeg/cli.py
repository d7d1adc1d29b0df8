"""Command-line interface: plan, simulate, sweep, fit-timing, transform.

Exit codes: 0 success, 1 bad input (config, CSV, arguments, output path),
2 infeasible regime or degenerate registration input.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import coupling
from .config import RunConfig, load_config, params_to_dict
from .errors import (
    AllPairsDegenerate,
    ConfigError,
    DegenerateDesign,
    DegenerateMatchPair,
    InsufficientMatches,
    ProvisoViolated,
    SpeedTooHigh,
)
from .flightsim import COMBINED, MODES, PARALLEL, SEQUENTIAL, run_trials, summarize
from .io import (
    CsvFormatError,
    atomic_write_text,
    read_matches_csv,
    read_timings_csv,
    rows_csv_text,
    trace_csv_text,
)
from .registration import estimate_transform
from .timing import fit_timing

SWEEPABLE = ("n", "v", "d_u", "t0", "k1", "i", "t_exe_first")


class UsageError(Exception):
    pass


def _fmt(v) -> str:
    if v is None:
        return "null"
    if isinstance(v, float):
        return f"{v:.10g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def render_text(report: dict, prefix: str = "") -> str:
    """Flatten a nested report into ``key = value`` lines."""
    lines = []
    for k, v in report.items():
        if isinstance(v, dict):
            lines.append(render_text(v, f"{prefix}{k}."))
        else:
            lines.append(f"{prefix}{k} = {_fmt(v)}")
    return "\n".join(x for x in lines if x)


def _finite(v):
    # JSON has no infinities; unbounded values become null
    if isinstance(v, dict):
        return {k: _finite(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_finite(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def render(report: dict, as_json: bool) -> str:
    if as_json:
        return json.dumps(_finite(report), indent=2, allow_nan=False) + "\n"
    return render_text(report) + "\n"


def _verdict_dict(v: coupling.ModeVerdict) -> dict:
    return {
        "status": v.status.value,
        "fixed_points": list(v.fixed_points),
        "violated_conditions": list(v.violated_conditions),
        "notes": list(v.notes),
    }


def _par_first(cfg: RunConfig) -> float:
    return cfg.sim.get("t_exe_first") or coupling.par_coeffs(cfg.params).gamma


def _comb_first(cfg: RunConfig) -> float:
    return cfg.sim.get("t_exe_first") or cfg.params.k1 * cfg.sim.get("min_scan_count", 1.0)


def plan_report(cfg: RunConfig) -> tuple[dict, bool]:
    """Analytic planning report; the flag is False for an infeasible sequential regime."""
    p = cfg.params
    seq: dict = {"v_max": coupling.seq_v_max(p)}
    feasible = True
    try:
        seq["n_max"] = coupling.seq_n_max(p)
        n_real, n_int = coupling.seq_optimal_n(p)
        seq["n_star_real"] = n_real
        seq["n_star_int"] = n_int
        seq["expected_failures_at_n_star_int"] = coupling.seq_expected_failures(p, n_int)
        seq["min_expected_failures_exact"] = coupling.seq_expected_failures(p, n_real)
    except SpeedTooHigh as exc:
        feasible = False
        seq["infeasible"] = f"SpeedTooHigh: {exc}"
    try:
        seq["min_expected_failures_approx"] = coupling.seq_min_expected_failures(p)
        seq["t0_max"] = coupling.seq_T0_max(p)
    except ProvisoViolated as exc:
        seq["t0_max"] = None
        seq["proviso"] = f"ProvisoViolated: {exc}"

    pc = coupling.par_coeffs(p)
    fp = coupling.par_fixed_points(pc)
    t_par = _par_first(cfg)
    par = {"alpha": pc.alpha, "beta": pc.beta, "gamma": pc.gamma,
           "t1": fp[0] if fp else None, "t2": fp[1] if fp else None,
           "t_exe_first": t_par, "verdict": _verdict_dict(coupling.par_verdict(pc, t_par))}

    cc = coupling.comb_coeffs(p)
    s1 = coupling.comb_fixed_point(cc)
    t_comb = _comb_first(cfg)
    comb = {"sigma": cc.sigma, "sigma_prime": cc.sigma_prime, "s1": s1,
            "t_exe_first": t_comb, "verdict": _verdict_dict(coupling.comb_verdict(cc, t_comb))}
    report = {"params": params_to_dict(p), "sequential": seq, "parallel": par, "combined": comb}
    return report, feasible


def cmd_plan(args) -> int:
    cfg = load_config(_need(args, "config"))
    report, feasible = plan_report(cfg)
    _emit(args, render(report, args.json))
    return 0 if feasible else 2


def _need(args, name):
    val = getattr(args, name, None)
    if val is None:
        raise UsageError(f"--{name.replace('_', '-')} is required")
    return val


def _emit(args, text: str, default_name: str | None = None) -> None:
    out = getattr(args, "out", None)
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    if path.is_dir() and default_name:
        path = path / default_name
    atomic_write_text(path, text)


def _analytic_for_sim(cfg: RunConfig, sc) -> dict:
    p = sc.params
    if sc.mode == SEQUENTIAL:
        n = sc.n_relatives or coupling.seq_optimal_n(p)[1]
        t_abs = coupling.seq_abs_exec_time(p, n)
        return {"n_relatives": n, "t_exe_absolute_s": t_abs,
                "failure_prob": coupling.seq_failure_prob(t_abs, p),
                "expected_failures": coupling.seq_expected_failures(p, n)}
    if sc.mode == PARALLEL:
        t_first = sc.t_exe_first or coupling.par_coeffs(p).gamma
        return {"t_exe_first": t_first,
                "verdict": _verdict_dict(coupling.par_verdict(coupling.par_coeffs(p), t_first))}
    t_first = sc.t_exe_first or p.k1 * sc.min_scan_count
    return {"t_exe_first": t_first,
            "verdict": _verdict_dict(coupling.comb_verdict(coupling.comb_coeffs(p), t_first))}


def cmd_simulate(args) -> int:
    cfg = load_config(_need(args, "config"))
    out = Path(_need(args, "out"))
    try:
        sc = cfg.sim_config(mode=args.mode, trials=args.trials, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    try:
        analytic = _analytic_for_sim(cfg, sc)
    except SpeedTooHigh as exc:
        print(f"infeasible regime: SpeedTooHigh: {exc}", file=sys.stderr)
        return 2
    out.mkdir(parents=True, exist_ok=True)
    traces = run_trials(sc, jobs=args.jobs)
    summary = {"mode": sc.mode, "trials": sc.trials, "seed": sc.seed,
               "summary": summarize(traces), "analytic": analytic}
    atomic_write_text(out / "trace.csv", trace_csv_text(traces[0]))
    atomic_write_text(out / "summary.txt", render(summary, False))
    atomic_write_text(out / "summary.json", render(summary, True))
    if args.json:
        sys.stdout.write(render(summary, True))
    else:
        sys.stdout.write(render_text(summary["summary"]) + "\n")
    return 0


def sweep_rows(cfg: RunConfig, name: str, grid) -> tuple[list[str], list[list]]:
    """One row of analytic outputs per grid value of parameter ``name``."""
    if name not in SWEEPABLE:
        raise UsageError(f"unknown sweep parameter {name!r}; valid: {', '.join(SWEEPABLE)}")
    header = ["n", "v", "d_u", "t0", "k1", "i", "t_exe_first",
              "v_max", "n_max", "n_star_real", "n_star_int",
              "t_exe_abs_s", "t_cycle_s", "failure_prob", "expected_failures", "t0_max_s",
              "alpha", "beta", "gamma", "t1_s", "t2_s", "parallel_status",
              "sigma", "sigma_prime", "s1_s", "combined_status"]
    rows = []
    for x in grid:
        x = float(x)
        p = cfg.params
        if name in ("v", "d_u", "t0", "k1", "i"):
            p = p.replace(**{name: x})
        row = dict.fromkeys(header)
        row.update(v=p.v, d_u=p.d_u, t0=p.t0, k1=p.k1, i=p.i)
        row["v_max"] = coupling.seq_v_max(p)
        row["n_max"] = coupling.seq_n_max_closed_form(p)
        row["n_star_real"] = math.sqrt((p.a + p.i) * (p.b + p.i)) / (2 * p.d_u)
        try:
            row["n_star_int"] = coupling.seq_optimal_n(p)[1]
        except SpeedTooHigh:
            pass
        if name == "n":
            n = x
        else:
            n = cfg.sim.get("n_relatives") or row["n_star_int"] or row["n_star_real"]
        row["n"] = n
        row["t_exe_abs_s"] = coupling.seq_abs_exec_time(p, n)
        row["t_cycle_s"] = coupling.seq_cycle_time(p, n)
        row["failure_prob"] = coupling.seq_failure_prob(row["t_exe_abs_s"], p)
        row["expected_failures"] = coupling.seq_expected_failures(p, n)
        try:
            row["t0_max_s"] = coupling.seq_T0_max(p)
        except ProvisoViolated:
            pass
        pc = coupling.par_coeffs(p)
        row.update(alpha=pc.alpha, beta=pc.beta, gamma=pc.gamma)
        fp = coupling.par_fixed_points(pc)
        if fp:
            row["t1_s"], row["t2_s"] = fp
        cc = coupling.comb_coeffs(p)
        row.update(sigma=cc.sigma, sigma_prime=cc.sigma_prime, s1_s=coupling.comb_fixed_point(cc))
        if name == "t_exe_first":
            t_par = t_comb = x
        else:
            t_par = cfg.sim.get("t_exe_first") or pc.gamma
            t_comb = cfg.sim.get("t_exe_first") or p.k1 * cfg.sim.get("min_scan_count", 1.0)
        row["t_exe_first"] = t_par
        row["parallel_status"] = coupling.par_verdict(pc, t_par).status.value
        row["combined_status"] = coupling.comb_verdict(cc, t_comb).status.value
        rows.append([_cell(row[h]) for h in header])
    return header, rows


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def cmd_sweep(args) -> int:
    cfg = load_config(_need(args, "config"))
    if args.steps < 1:
        raise UsageError("steps must be >= 1")
    grid = np.linspace(args.start, args.stop, args.steps) if args.steps > 1 else [args.start]
    header, rows = sweep_rows(cfg, args.parameter, grid)
    _emit(args, rows_csv_text(header, rows), "sweep.csv")
    return 0


def cmd_fit_timing(args) -> int:
    samples = read_timings_csv(args.csv)
    if len(samples) < 3:
        raise CsvFormatError(f"need at least 3 data rows, got {len(samples)}")
    fit = fit_timing(samples)
    tp = fit.params
    report = {"a_c": tp.a_c, "l": tp.l, "t0_pair": tp.t0_pair, "b": tp.b,
              "r2_load": fit.r2_load, "r2_match": fit.r2_match, "r2_threshold": fit.r2_threshold}
    _emit(args, render(report, args.json), "timing_fit.txt")
    return 0


def cmd_transform(args) -> int:
    matches = read_matches_csv(args.csv)
    if len(matches) < 2:
        raise CsvFormatError(f"need at least 2 matches, got {len(matches)}")
    try:
        est = estimate_transform(matches)
    except (DegenerateMatchPair, AllPairsDegenerate) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    t = est.transform
    report = {"theta_deg": math.degrees(t.theta), "t_x": t.t_x, "t_y": t.t_y,
              "residual_rms": est.residual_rms, "n_pairs_used": est.n_pairs_used}
    _emit(args, render(report, args.json), "transform.txt")
    return 0


def _globals(parser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="run configuration (JSON)")
    parser.add_argument("--seed", type=int, default=d, help="root random seed (u64)")
    parser.add_argument("--out", default=d, help="output file, or directory for simulate")
    parser.add_argument("--json", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="machine-readable output")
    parser.add_argument("--mode", choices=MODES, default=d)
    parser.add_argument("--trials", type=int, default=d)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="georeg", description=__doc__.splitlines()[0])
    _globals(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _globals(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("plan", parents=[common], help="analytic limits of the three modes")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", parents=[common], help="Monte-Carlo flights")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="analytic outputs over a parameter grid")
    p.add_argument("parameter", help=f"one of {', '.join(SWEEPABLE)}")
    p.add_argument("start", type=float)
    p.add_argument("stop", type=float)
    p.add_argument("steps", type=int)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit-timing", parents=[common], help="fit the relative-registration timing model")
    p.add_argument("csv", help="n_descriptors,t_load_s,t_match_s,t_threshold_s")
    p.set_defaults(func=cmd_fit_timing)

    p = sub.add_parser("transform", parents=[common], help="rigid motion from a matches CSV")
    p.add_argument("csv", help="x1,y1,x2,y2")
    p.set_defaults(func=cmd_transform)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.trials is not None and args.trials < 1:
        print("error: --trials must be >= 1", file=sys.stderr)
        return 1
    if args.seed is not None and not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ConfigError, CsvFormatError, UsageError, DegenerateDesign, InsufficientMatches) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc.strerror or exc}: {exc.filename or ''}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
