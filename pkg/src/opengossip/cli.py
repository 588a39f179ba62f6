"""Command-line front end.

    opengossip analytic {fixed-point,spectrum,trajectory,growing,bound,baseline}
    opengossip simulate {fixed,growing}
    opengossip compare {fixed,growing}

Series go to CSV (``--csv``), summaries to JSON (``--json``, default stdout).
The default seed can be overridden with the ``OPENGOSSIP_SEED`` environment
variable.
"""
from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

from . import analytic
from .compare import analytic_overlay, compare_trajectories, run_comparison
from .core import ArrivalDistribution, DIST_KINDS, MomentVector
from .report import ANALYTIC_CSV_HEADER, RunReport, csv_text
from .sim import (
    ConstantSchedule,
    FixedRateSchedule,
    InverseSchedule,
    LinearRateSchedule,
    SimConfig,
    TableSchedule,
    run_ensemble,
    run_fixed,
    run_growing,
)

SEED_ENV = "OPENGOSSIP_SEED"


class UsageError(Exception):
    pass


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer, got {raw!r}")


def _emit(text: str, path: str | None) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        Path(path).write_text(text)


def _finish(report: RunReport, args) -> int:
    _emit(report.to_json(), getattr(args, "json", None))
    return 0 if report.passed else 1


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _schedule(args):
    kind = args.schedule
    if kind == "constant":
        if args.p is None:
            raise UsageError("--p is required for the constant schedule")
        return ConstantSchedule(args.p)
    if kind == "fixed-rate":
        return FixedRateSchedule(args.lam_a, args.lam_g)
    if kind == "linear-rate":
        return LinearRateSchedule(args.lam_r, args.lam_g)
    if kind == "inverse":
        return InverseSchedule()
    if kind == "table":
        if not args.table:
            raise UsageError("--table is required for the table schedule")
        return TableSchedule(tuple(_floats(args.table)), start=args.n0)
    raise UsageError(f"unknown schedule {kind!r}")


# --------------------------------------------------------------------------- analytic

def cmd_fixed_point(args) -> int:
    X = analytic.fixed_point(args.n, args.p, args.sigma2)
    var = analytic.fixed_point_variance(args.n, args.p, args.sigma2)
    m = analytic.mixed_event_map(args.n, args.p, args.sigma2)
    resid = max(abs(a - b) for a, b in zip(m(X), X))
    report = RunReport("analytic fixed-point",
                       config={"n": args.n, "p": args.p, "sigma2": args.sigma2},
                       analytic={"sq_mean": X.sq_mean, "mean_sq": X.mean_sq, "variance": var,
                                 "residual": resid,
                                 "large_n_variance_limit": args.p * args.sigma2})
    return _finish(report, args)


def cmd_spectrum(args) -> int:
    s = analytic.spectrum(args.n, args.p)
    res = s.residuals(analytic.mixed_event_map(args.n, args.p, 1.0).matrix)
    report = RunReport("analytic spectrum", config={"n": args.n, "p": args.p},
                       analytic={"r_plus": s.r_plus, "r_minus": s.r_minus,
                                 "v_plus": list(s.v_plus), "v_minus": list(s.v_minus),
                                 "delta": s.delta, "residuals": list(res),
                                 "regime": analytic.spectral_radius_regime(args.n, args.p)})
    return _finish(report, args)


def cmd_trajectory(args) -> int:
    if args.x0:
        vals = _floats(args.x0)
        if len(vals) != 2:
            raise UsageError("--x0 takes two numbers: sq_mean,mean_sq")
        X0 = MomentVector(*vals)
    else:
        X0 = analytic.iid_moments(args.n, args.sigma2)
    traj = analytic.mixed_trajectory(args.n, args.p, args.sigma2, X0, args.steps)
    rows = ((args.n, args.p, args.sigma2, int(t), sq, ms, v)
            for t, sq, ms, v in zip(traj.t, traj.sq_mean, traj.mean_sq, traj.variance))
    _emit(csv_text(ANALYTIC_CSV_HEADER, rows), args.csv)
    if args.json:
        fin = traj.final()
        report = RunReport("analytic trajectory",
                           config={"n": args.n, "p": args.p, "sigma2": args.sigma2,
                                   "steps": args.steps, "x0": list(X0)},
                           analytic={"final": {k: fin[k] for k in ("sq_mean", "mean_sq", "variance")}})
        _emit(report.to_json(), args.json)
    return 0


def cmd_growing(args) -> int:
    schedule = _schedule(args)
    rows = []
    for st in analytic.growing_recursion(args.n_max, schedule, args.sigma2, args.n0):
        p_n = schedule(st.n)
        rows.append((st.n, p_n, args.sigma2, st.n - args.n0, st.sq_mean_n,
                     st.sq_mean_n + st.var_n, st.var_n))
    _emit(csv_text(ANALYTIC_CSV_HEADER, rows), args.csv)
    if args.json:
        last = rows[-1]
        an = {"final_n": last[0], "final_variance": last[6]}
        if args.schedule == "constant":
            an["limit"] = analytic.growing_limit(args.p, args.sigma2)
        report = RunReport("analytic growing",
                           config={"n0": args.n0, "n_max": args.n_max, "sigma2": args.sigma2,
                                   "schedule": schedule.describe()},
                           analytic=an)
        _emit(report.to_json(), args.json)
    return 0


def cmd_bound(args) -> int:
    if not 0 < args.p < 1:
        raise UsageError("bound requires 0 < p < 1 (q = 1/p - 1 > 0)")
    q = 1.0 / args.p - 1.0
    header = ("n", "p", "sigma2", "w_n", "bound", "w_over_n", "bound_over_n")
    rows = []
    w_n0 = None
    worst = -math.inf
    for st in analytic.growing_recursion(args.n_max, ConstantSchedule(args.p), args.sigma2):
        if st.n == args.n0:
            w_n0 = st.w_n
        if st.n > args.n0:
            b = analytic.appendix_bound(args.n0, st.n, q, w_n0, args.sigma2)
            worst = max(worst, st.w_n - b)
            rows.append((st.n, args.p, args.sigma2, st.w_n, b, st.w_n / st.n, b / st.n))
    if args.csv:
        _emit(csv_text(header, rows), args.csv)
    last = rows[-1]
    report = RunReport("analytic bound",
                       config={"n0": args.n0, "n_max": args.n_max, "p": args.p,
                               "sigma2": args.sigma2},
                       analytic={"q": q, "limit": args.p * args.sigma2,
                                 "final_w_over_n": last[5], "final_bound_over_n": last[6]},
                       verdicts={"bound_dominates": {"pass": worst <= 0.0,
                                                     "max_w_minus_bound": worst}})
    return _finish(report, args)


def cmd_baseline(args) -> int:
    base = analytic.closed_system_baseline(args.n, args.K, args.sigma2)
    limit = analytic.closed_system_baseline_limit(args.K, args.sigma2)
    open_limit = analytic.growing_limit(1.0 / (args.K + 1.0), args.sigma2)
    report = RunReport("analytic baseline",
                       config={"n": args.n, "K": args.K, "sigma2": args.sigma2},
                       analytic={"closed_variance": base, "closed_limit": limit,
                                 "open_limit": open_limit,
                                 "closed_over_open_limit": limit / open_limit})
    return _finish(report, args)


# --------------------------------------------------------------------------- simulation

def _sim_config(args, mode: str) -> SimConfig:
    dist = ArrivalDistribution(args.dist, args.sigma2)
    seed = default_seed() if args.seed is None else args.seed
    common = dict(dist=dist, replicates=args.replicates, seed=seed)
    init = args.init
    if args.x0:
        init = "explicit"
    common.update(init=init, init_values=tuple(_floats(args.x0)) if args.x0 else (),
                  consensus_value=args.consensus_value)
    if mode == "fixed_size":
        if args.replacements is not None:
            horizon, unit = args.replacements, "replacements"
        else:
            horizon, unit = args.events, "events"
        return SimConfig(mode="fixed_size", n0=args.n, p=args.p, horizon=horizon,
                         horizon_unit=unit, record_values=bool(args.values_csv), **common)
    return SimConfig(mode="growing", n0=args.n0, p_schedule=_schedule(args),
                     horizon=args.arrivals, record_every_event=args.every_event, **common)


_MOMENTS = ("sq_mean", "mean_sq", "variance")


def _summary(final: dict, keys=("sq_mean", "mean_sq", "variance", "mean")) -> dict:
    return {k: final[k] for k in keys}


def _analytic_summary(config: SimConfig) -> dict:
    if config.mode == "fixed_size":
        out = {"large_n_variance_limit": config.p * config.sigma2}
        if config.p > 0:
            X = analytic.fixed_point(config.n0, config.p, config.sigma2)
            out["fixed_point"] = {"sq_mean": X.sq_mean, "mean_sq": X.mean_sq,
                                  "variance": analytic.fixed_point_variance(
                                      config.n0, config.p, config.sigma2)}
        s = analytic.spectrum(config.n0, config.p)
        out["eigenvalues"] = [s.r_plus, s.r_minus]
        return out
    sched = config.p_schedule
    if isinstance(sched, (ConstantSchedule, LinearRateSchedule)):
        return {"variance_limit": analytic.growing_limit(sched(config.n0), config.sigma2)}
    return {}


def cmd_simulate(args) -> int:
    mode = "fixed_size" if args.mode == "fixed" else "growing"
    config = _sim_config(args, mode)
    report = RunReport(f"simulate {args.mode}", config=config.describe(),
                       analytic=_analytic_summary(config))
    if config.replicates == 1:
        traj = run_fixed(config) if mode == "fixed_size" else run_growing(config)
        overlay = None
        if args.overlay:
            if mode == "fixed_size":
                overlay = analytic_overlay(config, steps=len(traj) - 1)
            elif not config.record_every_event:
                overlay = analytic_overlay(config)
        header = ["t", "n", "event", "sq_mean", "mean_sq", "variance", "mean"]
        cols = [traj.t, traj.n, traj.extra["event"], traj.sq_mean, traj.mean_sq,
                traj.variance, traj.mean]
        if mode == "fixed_size":
            header += ["departed", "arrived"]
            cols += [traj.extra["departed"], traj.extra["arrived"]]
        if overlay is not None:
            header += ["analytic_sq_mean", "analytic_mean_sq", "analytic_variance"]
            cols += [overlay.sq_mean, overlay.mean_sq, overlay.variance]
        if args.csv:
            _emit(csv_text(header, zip(*cols)), args.csv)
        if mode == "fixed_size" and args.values_csv:
            vheader = ["t"] + [f"x{i}" for i in range(config.n0)]
            _emit(csv_text(vheader, ([t, *row] for t, row in zip(traj.t, traj.values))),
                  args.values_csv)
        report.empirical = {"final": _summary(traj.final()), "samples": len(traj)}
        if mode == "fixed_size":
            events = traj.extra["event"]
            report.empirical["replacement_instants"] = [
                int(t) for t, e in zip(traj.t, events) if e == "replacement"]
        return _finish(report, args)

    ens = run_ensemble(config, workers=args.workers)
    m, s = ens.mean_trajectory, ens.stderr_trajectory
    overlay = analytic_overlay(config) if (args.overlay or args.check) else None
    header = ["t", "n"]
    cols = [m.t, m.n]
    for name in ("sq_mean", "mean_sq", "variance", "mean"):
        header += [name, f"{name}_se"]
        cols += [m.column(name), s.column(name)]
    if mode == "growing":
        header += ["t_event", "t_event_se"]
        cols += [m.extra["t_event"], s.extra["t_event"]]
    if overlay is not None:
        header += ["analytic_sq_mean", "analytic_mean_sq", "analytic_variance"]
        cols += [overlay.sq_mean, overlay.mean_sq, overlay.variance]
    if args.csv:
        _emit(csv_text(header, zip(*cols)), args.csv)
    fin = ens.final()
    report.empirical = {"final": _summary(fin["mean"]), "final_stderr": _summary(fin["stderr"]),
                        "replicates": ens.replicates}
    if args.check:
        fields = (("sq_mean", "mean_sq", "variance") if mode == "fixed_size"
                  else ("sq_mean", "variance"))
        report.verdicts = compare_trajectories(m, s, overlay, fields=fields, k=args.k,
                                               min_fraction=args.min_fraction)
        if mode == "fixed_size" and config.p > 0:
            target = analytic.fixed_point_variance(config.n0, config.p, config.sigma2)
            z = abs(fin["mean"]["variance"] - target) / fin["stderr"]["variance"]
            report.verdicts["final_variance_vs_fixed_point"] = {
                "k": args.k, "target": target, "z": z, "pass": z <= args.k}
    return _finish(report, args)


def cmd_compare(args) -> int:
    mode = "fixed_size" if args.mode == "fixed" else "growing"
    config = _sim_config(args, mode)
    if config.replicates < 2:
        raise UsageError("compare needs --replicates >= 2")
    start = 0
    if mode == "growing" and args.min_n is not None:
        start = max(0, args.min_n - config.n0)
    ens, overlay, verdicts = run_comparison(
        config, k=args.k, min_fraction=args.min_fraction, start=start,
        analytic_p=args.analytic_p, analytic_steps=args.analytic_horizon,
        workers=args.workers)
    fin = ens.final()
    report = RunReport(f"compare {args.mode}",
                       config={**config.describe(), "k": args.k,
                               "min_fraction": args.min_fraction,
                               "analytic_p": args.analytic_p, "start_index": start},
                       analytic={"final": _summary(overlay.final(), _MOMENTS)},
                       empirical={"final": _summary(fin["mean"], _MOMENTS),
                                  "final_stderr": _summary(fin["stderr"], _MOMENTS)},
                       verdicts=verdicts)
    if args.csv:
        m, s = ens.mean_trajectory, ens.stderr_trajectory
        header = ["t", "n"]
        cols = [m.t, m.n]
        for name in ("sq_mean", "mean_sq", "variance"):
            header += [name, f"{name}_se", f"analytic_{name}"]
            cols += [m.column(name), s.column(name), overlay.column(name)]
        _emit(csv_text(header, zip(*cols)), args.csv)
    return _finish(report, args)


# --------------------------------------------------------------------------- parser

def _add_output(p, csv=True):
    if csv:
        p.add_argument("--csv", metavar="PATH", help="series output (CSV)")
    p.add_argument("--json", metavar="PATH", help="summary output (JSON, default stdout)")


def _add_sim_common(p):
    p.add_argument("--sigma2", type=float, default=1.0 / 12.0)
    p.add_argument("--dist", choices=DIST_KINDS, default="uniform_centered")
    p.add_argument("--replicates", type=int, default=1)
    p.add_argument("--seed", type=int, default=None,
                   help=f"base seed (default: ${SEED_ENV} or 0)")
    p.add_argument("--init", choices=("iid", "consensus"), default="iid")
    p.add_argument("--x0", help="explicit comma-separated initial values")
    p.add_argument("--consensus-value", type=float, default=0.0)
    p.add_argument("--workers", type=int, default=1)


def _add_fixed(p):
    p.add_argument("--n", type=int, default=25)
    p.add_argument("--p", type=float, default=0.05)
    horizon = p.add_mutually_exclusive_group()
    horizon.add_argument("--events", type=int, default=2000)
    horizon.add_argument("--replacements", type=int, default=None)
    _add_sim_common(p)


def _add_schedule(p, p_default=None):
    p.add_argument("--schedule", choices=("constant", "fixed-rate", "linear-rate", "inverse",
                                          "table"), default="constant")
    p.add_argument("--p", type=float, default=p_default)
    p.add_argument("--lam-a", type=float, default=1.0)
    p.add_argument("--lam-g", type=float, default=1.0)
    p.add_argument("--lam-r", type=float, default=1.0)
    p.add_argument("--table", help="comma-separated p_n values starting at n0")
    p.add_argument("--n0", type=int, default=1)


def _add_growing(p):
    _add_schedule(p, p_default=0.2)
    p.add_argument("--arrivals", type=int, default=1999)
    p.add_argument("--every-event", action="store_true")
    _add_sim_common(p)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opengossip",
                                     description="Open multi-agent gossip: analysis and simulation")
    sub = parser.add_subparsers(dest="command", required=True)

    an = sub.add_parser("analytic", help="closed-form expected dynamics")
    asub = an.add_subparsers(dest="what", required=True)
    p = asub.add_parser("fixed-point")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--sigma2", type=float, default=1.0 / 12.0)
    _add_output(p, csv=False)
    p.set_defaults(func=cmd_fixed_point)

    p = asub.add_parser("spectrum")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    _add_output(p, csv=False)
    p.set_defaults(func=cmd_spectrum)

    p = asub.add_parser("trajectory")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--sigma2", type=float, default=1.0 / 12.0)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--x0", help="initial sq_mean,mean_sq (default: i.i.d. agents)")
    _add_output(p)
    p.set_defaults(func=cmd_trajectory)

    p = asub.add_parser("growing")
    _add_schedule(p)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--n-max", type=int, required=True)
    _add_output(p)
    p.set_defaults(func=cmd_growing)

    p = asub.add_parser("bound")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--n0", type=int, default=2)
    p.add_argument("--n-max", type=int, default=10_000)
    _add_output(p)
    p.set_defaults(func=cmd_bound)

    p = asub.add_parser("baseline")
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--K", type=float, default=5.0)
    p.add_argument("--sigma2", type=float, default=1.0)
    _add_output(p, csv=False)
    p.set_defaults(func=cmd_baseline)

    sim = sub.add_parser("simulate", help="Monte Carlo runs")
    ssub = sim.add_subparsers(dest="mode", required=True)
    p = ssub.add_parser("fixed")
    _add_fixed(p)
    p.add_argument("--values-csv", metavar="PATH", help="agent values after every event")
    _add_output(p)
    p.add_argument("--overlay", action="store_true", help="add analytic expectation columns")
    p.add_argument("--check", action="store_true", help="fail unless within k stderr")
    p.add_argument("--k", type=float, default=4.0)
    p.add_argument("--min-fraction", type=float, default=0.99)
    p.set_defaults(func=cmd_simulate)

    p = ssub.add_parser("growing")
    _add_growing(p)
    _add_output(p)
    p.add_argument("--overlay", action="store_true")
    p.add_argument("--check", action="store_true")
    p.add_argument("--k", type=float, default=4.0)
    p.add_argument("--min-fraction", type=float, default=0.99)
    p.set_defaults(func=cmd_simulate)

    cmp_ = sub.add_parser("compare", help="ensemble vs analytic recursion")
    csub = cmp_.add_subparsers(dest="mode", required=True)
    for name, adder in (("fixed", _add_fixed), ("growing", _add_growing)):
        p = csub.add_parser(name)
        adder(p)
        _add_output(p)
        p.add_argument("--k", type=float, default=4.0)
        p.add_argument("--min-fraction", type=float, default=0.99)
        p.add_argument("--analytic-p", type=float, default=None,
                       help="override p in the analytic recursion (negative control)")
        p.add_argument("--analytic-horizon", type=int, default=None)
        p.add_argument("--min-n", type=int, default=None, help="growing: compare from this size")
        p.set_defaults(func=cmd_compare, values_csv=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ValueError, IndexError, FloatingPointError) as exc:
        print(f"opengossip: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
