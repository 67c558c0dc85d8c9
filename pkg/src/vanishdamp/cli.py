"""Command-line scenario runner.

Subcommands:

* ``run <cfg>``: integrate one configured scenario, analyze it, and
  write ``<name>_series.csv``, ``<name>_events.csv`` and
  ``<name>_summary.json`` (plus ``<name>_path.csv`` when the config has
  an [sgd] section).
* ``sweep <cfg>``: run a grid or random-start family of scenarios,
  writing one summary per row plus an aggregate table.
* ``verify [--list]``: run the built-in acceptance suite.
* ``oracle <kind>``: print closed-form reference values.

Exit codes: 0 success, 1 criterion failure, 2 config error, 3 solver
failure.  Artifacts are written atomically (temp file, then rename) and
all numbers use the shortest round-trip decimal form, so re-running a
scenario with the same config and seed reproduces the files byte for
byte apart from the wall-clock field inside the summary.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import acceptance
from .analyze import classify_limit, lower_bound_residual, rate_fit
from .config import (
    RunConfig,
    build_sweep_plan,
    config_echo,
    load_run_config,
    parse_config,
)
from .errors import ConfigError, SolverError, UnsupportedError, VanishDampError
from .integrate import Trajectory, integrate
from .oracle import bessel_j, linear_regular_solution, power_law_exact
from .sgd import DiscretePath, compare_to_ode, run_recursion

__all__ = ["main"]


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _fmt(value: float) -> str:
    return repr(float(value))


def _series_csv(traj: Trajectory) -> str:
    n = traj.n
    sched = traj.spec.schedule
    pot = traj.spec.potential
    cols = ["t"]
    cols += [f"x_{i}" for i in range(n)]
    cols += [f"v_{i}" for i in range(n)]
    cols += ["E", "a", "gnorm"]
    lines = [",".join(cols)]
    for k in range(len(traj.ts)):
        t = float(traj.ts[k])
        row = [_fmt(t)]
        row += [_fmt(v) for v in traj.xs[k]]
        row += [_fmt(v) for v in traj.vs[k]]
        row.append(_fmt(traj.energies[k]))
        row.append(_fmt(sched.a_at(t)) if t > 0.0 or not sched.singular_at_zero else "inf")
        row.append(_fmt(float(np.linalg.norm(pot.grad(traj.xs[k])))))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _events_csv(traj: Trajectory) -> str:
    n = traj.n
    cols = ["i", "t"] + [f"x_{i}" for i in range(n)] + ["E"]
    lines = [",".join(cols)]
    for ev in traj.events:
        row = [str(ev.index), _fmt(ev.time)]
        row += [_fmt(v) for v in ev.x]
        row.append(_fmt(ev.energy))
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _path_csv(path: DiscretePath) -> str:
    d = path.dim
    cols = ["n", "tau"] + [f"h_{i}" for i in range(d)] + [f"x_{i}" for i in range(d)]
    lines = [",".join(cols)]
    for k in range(len(path.tau)):
        row = [str(k), _fmt(path.tau[k])]
        row += [_fmt(v) for v in path.h[k]]
        row += [_fmt(v) for v in path.x[k]]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


def _fit_block(traj: Trajectory) -> Optional[dict]:
    ts = traj.ts
    t_end = float(ts[-1])
    lo = max(t_end / 100.0, float(ts[ts > 0.0][0]) if np.any(ts > 0.0) else 0.0)
    if not lo < t_end:
        return None
    phase = np.sum(traj.xs**2, axis=1) + np.sum(traj.vs**2, axis=1)
    try:
        fit = rate_fit(ts, phase, (lo, t_end), model="PowerLaw")
    except VanishDampError:
        return None
    return {
        "model": fit.model,
        "window": list(fit.window),
        "exponent": fit.exponent,
        "residual_rms": fit.residual_rms,
        "samples": fit.sample_count,
    }


def _summarize(run_cfg: RunConfig, traj: Trajectory, wall: float) -> dict:
    stats = traj.stats
    events = traj.events
    verdict_block = None
    if traj.n == 1:
        try:
            verdict_block = classify_limit(traj).__dict__.copy()
            verdict_block["limit_estimate"] = [float(v) for v in verdict_block["limit_estimate"]]
        except UnsupportedError:
            verdict_block = None
    event_block = {
        "count": len(events),
        "first_time": events[0].time if events else None,
        "last_time": events[-1].time if events else None,
        "last_gap": (events[-1].time - events[-2].time) if len(events) > 1 else None,
    }
    return {
        "name": run_cfg.name,
        "config": config_echo(run_cfg.parsed),
        "wall_clock_s": round(wall, 4),
        "solver": {
            "accepted": stats.accepted,
            "rejected": stats.rejected,
            "rhs_evals": stats.rhs_evals,
            "stride": stats.stride,
            "samples": len(traj.ts),
        },
        "events": event_block,
        "energy": {
            "initial": float(traj.energies[0]),
            "final": float(traj.energies[-1]),
        },
        "verdict": verdict_block,
        "rate_fit": _fit_block(traj),
        "lower_bound_residual": lower_bound_residual(traj),
    }


def _run_scenario(run_cfg: RunConfig, write_series: bool = True) -> dict:
    started = time.perf_counter()
    traj = integrate(run_cfg.spec)
    summary = _summarize(run_cfg, traj, time.perf_counter() - started)

    if run_cfg.sgd is not None:
        steps, noise, n_steps = run_cfg.sgd
        path = run_recursion(
            run_cfg.potential, steps, noise, run_cfg.spec.x0, n_steps
        )
        comparison = compare_to_ode(path, run_cfg.potential)
        summary["sgd"] = {
            "n_steps": path.n_steps,
            "final_tau": float(path.tau[-1]),
            "final_x": [float(v) for v in path.x[-1]],
            "drift_identity_max": path.drift_identity_max,
            "ode_deviation": comparison.deviation,
            "ode_metric": comparison.metric,
        }
        run_cfg.outdir.mkdir(parents=True, exist_ok=True)
        _atomic_write(run_cfg.outdir / f"{run_cfg.name}_path.csv", _path_csv(path))
    else:
        summary["sgd"] = None

    run_cfg.outdir.mkdir(parents=True, exist_ok=True)
    if write_series:
        _atomic_write(run_cfg.outdir / f"{run_cfg.name}_series.csv", _series_csv(traj))
        _atomic_write(run_cfg.outdir / f"{run_cfg.name}_events.csv", _events_csv(traj))
    _atomic_write(
        run_cfg.outdir / f"{run_cfg.name}_summary.json",
        json.dumps(summary, indent=2, sort_keys=True) + "\n",
    )
    return summary


def _cmd_run(args: argparse.Namespace) -> int:
    run_cfg = load_run_config(args.config, outdir=args.outdir)
    summary = _run_scenario(run_cfg)
    verdict = summary["verdict"]["verdict"] if summary["verdict"] else "n/a"
    fit = summary["rate_fit"]
    slope = f"{fit['exponent']:.4f}" if fit else "n/a"
    print(f"{run_cfg.name}: verdict {verdict}, rate exponent {slope}, "
          f"{summary['events']['count']} events, "
          f"{summary['solver']['accepted']} steps")
    print(f"wrote {run_cfg.outdir / (run_cfg.name + '_summary.json')}")
    return 0


def _sweep_row(task: Tuple[str, Dict[Tuple[str, str], str], Optional[str], str, bool]) -> dict:
    cfg_path, overrides, outdir, row_name, write_series = task
    try:
        run_cfg = load_run_config(cfg_path, overrides=overrides, outdir=outdir)
        run_cfg.name = row_name
        summary = _run_scenario(run_cfg, write_series=write_series)
        summary["error"] = None
        return summary
    except VanishDampError as exc:
        return {"name": row_name, "error": f"{type(exc).__name__}: {exc}"}


def _resolve_jobs(args: argparse.Namespace) -> int:
    if args.jobs is not None:
        return max(1, args.jobs)
    env = os.environ.get("VANISH_DAMP_JOBS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"VANISH_DAMP_JOBS expects an integer, got '{env}'")
    return 1


def _cmd_sweep(args: argparse.Namespace) -> int:
    base = load_run_config(args.config, outdir=args.outdir)
    plan = build_sweep_plan(base.parsed, base.potential)
    jobs = _resolve_jobs(args)
    tasks = [
        (str(args.config), overrides, args.outdir, f"{base.name}_row{i:04d}", plan.write_series)
        for i, overrides in enumerate(plan.rows)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            summaries = list(pool.map(_sweep_row, tasks))
    else:
        summaries = [_sweep_row(t) for t in tasks]

    rows = []
    verdict_counts: Dict[str, int] = {}
    location_counts: Dict[str, int] = {}
    slopes = []
    failures = 0
    for label, summary in zip(plan.labels, summaries):
        if summary["error"] is not None:
            failures += 1
            rows.append((summary["name"], label, "error", "", summary["error"]))
            continue
        verdict = summary["verdict"]["verdict"] if summary["verdict"] else "n/a"
        verdict_counts[verdict] = verdict_counts.get(verdict, 0) + 1
        if (
            summary["verdict"]
            and verdict in ("ConvergesToMin", "ConvergesToMax")
            and summary["verdict"]["nearest_location"] is not None
        ):
            # adding 0.0 after rounding folds -0.0 into 0.0
            loc = f"{round(summary['verdict']['nearest_location'], 3) + 0.0:.3f}"
            location_counts[loc] = location_counts.get(loc, 0) + 1
        fit = summary["rate_fit"]
        slope = fit["exponent"] if fit else None
        if slope is not None:
            slopes.append(slope)
        rows.append(
            (summary["name"], label, verdict, "" if slope is None else _fmt(slope), "")
        )

    total = len(summaries)
    aggregate = {
        "rows": total,
        "failures": failures,
        "fraction_by_verdict": {
            k: v / total for k, v in sorted(verdict_counts.items())
        },
        "fraction_by_location": {
            k: v / total for k, v in sorted(location_counts.items())
        },
        "mean_rate_exponent": float(np.mean(slopes)) if slopes else None,
    }

    outdir = Path(args.outdir) if args.outdir is not None else base.outdir
    outdir.mkdir(parents=True, exist_ok=True)
    table = ["row,label,verdict,rate_exponent,error"]
    for name, label, verdict, slope, error in rows:
        table.append(f"{name},{label},{verdict},{slope},{error}")
    _atomic_write(outdir / f"{base.name}_sweep.csv", "\n".join(table) + "\n")
    _atomic_write(
        outdir / f"{base.name}_aggregate.json",
        json.dumps(aggregate, indent=2, sort_keys=True) + "\n",
    )

    for name, label, verdict, slope, error in rows:
        tail = error if error else (f"rate {slope}" if slope else "")
        print(f"{name}  {label}: {verdict} {tail}".rstrip())
    print(
        f"{total} rows ({failures} failed); verdict fractions "
        + json.dumps(aggregate["fraction_by_verdict"], sort_keys=True)
    )
    print(f"wrote {outdir / (base.name + '_sweep.csv')}")
    return 0


def _cmd_verify(args: argparse.Namespace) -> int:
    if args.list:
        for cid, title in acceptance.list_criteria():
            print(f"{cid}  {title}")
        return 0
    ids = args.only.split(",") if args.only else None
    results = acceptance.run_criteria(ids=ids, progress=lambda r: print(r.line(), flush=True))
    if args.json:
        print(json.dumps([r.as_dict() for r in results], indent=2, sort_keys=True))
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return 1 if failed else 0


def _cmd_oracle(args: argparse.Namespace) -> int:
    try:
        times = [float(t) for t in args.t]
    except ValueError:
        raise ConfigError(f"--t expects numbers, got {args.t}") from None
    if args.kind == "bessel":
        if args.nu is None:
            raise ConfigError("oracle bessel needs --nu")
        print("t,value")
        for t in times:
            print(f"{_fmt(t)},{_fmt(bessel_j(args.nu, t))}")
        return 0
    if args.kind == "linear":
        if args.c is None:
            raise ConfigError("oracle linear needs --c")
        print("t,value")
        for t in times:
            print(f"{_fmt(t)},{_fmt(linear_regular_solution(args.c, t))}")
        return 0
    if args.kind == "power":
        if args.beta is None:
            raise ConfigError("oracle power needs --beta")
        print("t,x,v,c")
        for t in times:
            x, v, c = power_law_exact(args.beta, t)
            print(f"{_fmt(t)},{_fmt(x)},{_fmt(v)},{_fmt(c)}")
        return 0
    raise ConfigError(f"unknown oracle kind '{args.kind}'; expected bessel, linear or power")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vanishdamp",
        description="Run, sweep and verify damped gradient-system scenarios.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate one configured scenario")
    p_run.add_argument("config", help="path to a scenario config")
    p_run.add_argument("--outdir", default=None, help="artifact directory override")
    p_run.set_defaults(func=_cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a configured family of scenarios")
    p_sweep.add_argument("config", help="path to a scenario config with a [sweep] section")
    p_sweep.add_argument("--outdir", default=None, help="artifact directory override")
    p_sweep.add_argument("--jobs", type=int, default=None,
                         help="parallel rows (default: VANISH_DAMP_JOBS or 1)")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_verify = sub.add_parser("verify", help="run the acceptance suite")
    p_verify.add_argument("--list", action="store_true", help="list criteria and exit")
    p_verify.add_argument("--only", default=None,
                          help="comma-separated criterion ids to run")
    p_verify.add_argument("--json", action="store_true",
                          help="also print the full report as JSON")
    p_verify.set_defaults(func=_cmd_verify)

    p_oracle = sub.add_parser("oracle", help="print closed-form reference values")
    p_oracle.add_argument("kind", help="bessel, linear or power")
    p_oracle.add_argument("--nu", type=float, default=None, help="order (bessel)")
    p_oracle.add_argument("--c", type=float, default=None, help="damping amplitude (linear)")
    p_oracle.add_argument("--beta", type=float, default=None, help="decay exponent (power)")
    p_oracle.add_argument("--t", nargs="+", required=True, help="evaluation times")
    p_oracle.set_defaults(func=_cmd_oracle)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure ({type(exc).__name__}): {exc}", file=sys.stderr)
        return 3
    except VanishDampError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
