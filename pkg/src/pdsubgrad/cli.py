"""Command-line entry point: ``pdsubgrad <experiment> [options]``.

Every subcommand prints its headline table as CSV on stdout. With
``--out DIR`` the full curves, a JSON summary and PNG figures are written
to ``DIR`` as well.
"""

import argparse
import csv
import json
import sys

from . import experiments

SMALL_N = 20


def _schedules(text):
    return tuple(s.strip() for s in text.split(",") if s.strip())


def _floats(text):
    return tuple(float(s) for s in text.split(",") if s.strip())


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="instance / noise seed (default 0)")
    common.add_argument("--out", default=None, help="directory for CSV, JSON and PNG outputs")
    common.add_argument("--T", type=int, default=None, help="iteration budget (experiment-specific default)")
    common.add_argument("--n", type=int, default=100, help="problem dimension (default 100)")
    common.add_argument("--small", action="store_true", help=f"use n = {SMALL_N} for quick runs")
    common.add_argument("--eps", type=float, default=0.05, help="stopping tolerance (default 0.05)")
    common.add_argument("--sigma", type=float, default=0.0, help="perturbation scale of C (default 0)")
    common.add_argument("--schedule", type=_schedules, default=None,
                        help="comma-separated schedules: uniform,linear,polyP,optimized,smooth,capped")
    common.add_argument("--replicates", type=int, default=1, help="replicate runs for expectations")
    common.add_argument("--max-iter", type=int, default=10**7, help="cap for stopping-time runs")
    common.add_argument("--no-plot", dest="plot", action="store_false", help="skip PNG figures")
    common.add_argument("--plot", dest="plot", action="store_true", help="write PNG figures (default)")
    common.add_argument("--dump-instance", default=None, help="write the generated instance to JSON")
    common.add_argument("--load-instance", default=None, help="read the instance from JSON")
    common.set_defaults(plot=True)

    p = argparse.ArgumentParser(prog="pdsubgrad", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("fig1", parents=[common], help="observed convergence vs. rate bound per schedule")
    sub.add_parser("table1", parents=[common], help="stopping times of the gap criteria")
    t2 = sub.add_parser("table2", aliases=["divergence"], parents=[common],
                        help="conditioning sweep: T0, C0 and early divergence")
    t2.add_argument("--sigmas", type=_floats, default=experiments.SIGMAS, help="comma-separated sigma list")
    sub.add_parser("toy", parents=[common], help="2-D quadratic that diverges before converging")
    eq = sub.add_parser("equivalence", parents=[common], help="primal vs. dual iterate deviation")
    eq.add_argument("--beta-bars", type=_floats, default=(0.0, 1.0, 10.0))
    run = sub.add_parser("run", parents=[common], help="single run from a JSON config")
    run.add_argument("--config", required=True, help="JSON file with instance, schedule, method, T, stop")
    run.add_argument("--method", choices=("primal", "dual", "both"), default=None)
    run.add_argument("--stop", default=None, help="stopping criterion name, e.g. p+d")
    return p


def spec_from_args(args):
    n = SMALL_N if args.small else args.n
    spec = experiments.ExperimentSpec(
        experiment=args.command, n=n, sigma=args.sigma, seed=args.seed, T=args.T, eps=args.eps,
        replicates=args.replicates, max_iter=args.max_iter, out=args.out, plot=args.plot,
        load_instance=args.load_instance, dump_instance=args.dump_instance)
    if args.schedule:
        spec.schedules = args.schedule
        spec.extra["schedules"] = args.schedule
    if getattr(args, "sigmas", None) is not None:
        spec.sigmas = args.sigmas
    if getattr(args, "beta_bars", None) is not None:
        spec.beta_bars = args.beta_bars
    return spec


def emit(rows, columns=None, stream=None):
    stream = stream or sys.stdout
    if not rows:
        return
    cols = columns or list(dict.fromkeys(k for r in rows for k in r))
    wr = csv.writer(stream, lineterminator="\n")
    wr.writerow(cols)
    for r in rows:
        wr.writerow([experiments._cell(r.get(c)) for c in cols])


def _kv(d):
    return [{"key": k, "value": v} for k, v in d.items() if not isinstance(v, (dict, list))]


def main(argv=None):
    args = build_parser().parse_args(argv)
    cmd = args.command
    if cmd == "run":
        with open(args.config) as fh:
            cfg = json.load(fh)
        if args.T is not None:
            cfg["T"] = args.T
        cfg.setdefault("seed", args.seed)
        if args.method:
            cfg["method"] = args.method
        if args.stop:
            cfg["stop"] = {"criterion": args.stop, "eps": args.eps}
        if args.load_instance:
            cfg["instance"] = {"path": args.load_instance}
        res = experiments.cmd_run(cfg, out=args.out, plot=args.plot)
        final = res["summary"]["final"] or {}
        emit([{k: v for k, v in final.items() if not isinstance(v, (dict, list))}])
        return 0
    spec = spec_from_args(args)
    if cmd == "fig1":
        res = experiments.cmd_fig1(spec)
        emit([dict(schedule=k, **v) for k, v in res["summary"]["final"].items()])
    elif cmd == "table1":
        res = experiments.cmd_table1(spec)
        emit(res["rows"])
    elif cmd in ("table2", "divergence"):
        res = experiments.cmd_divergence(spec)
        emit(res["rows"])
    elif cmd == "toy":
        res = experiments.cmd_toy(spec)
        emit(_kv(res["summary"]), ["key", "value"])
    elif cmd == "equivalence":
        res = experiments.cmd_equivalence(spec)
        emit(res["rows"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
