"""Command line entry point.

    lrpr run --n 60 --q 120 --r 2 --m0 150 --m1 60 --T 25 --seed 3 --out out/
    lrpr sweep noise.json --out out/ --threads 4
    lrpr oracle
    lrpr gen --n 20 --q 30 --r 2 --out out/ --dump-y

Exit status: 0 on success, 1 on usage errors, 2 on runtime errors (including
a failing ``oracle`` criterion).
"""

import argparse
import json
import os
import sys
import warnings

from ..altmin import run
from ..errors import LRPRError
from ..model import generate_ground_truth
from ..sensing import NoiseSpec, SamplePlan, measure
from .experiment import Experiment, Instance, build_config, run_experiment

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

INSTANCE_FLAGS = {
    "n": int,
    "q": int,
    "r": int,
    "kappa": float,
    "m0": int,
    "m1": int,
    "T": int,
    "eps_snr": float,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _global_flags():
    # attached to the top-level parser and to every subcommand so the flags
    # may appear on either side of the command name
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS)
    p.add_argument("--field", choices=("real", "complex"), default=argparse.SUPPRESS)
    p.add_argument("--json", action="store_true", default=argparse.SUPPRESS)
    return p


def _instance_flags(p):
    for name, typ in INSTANCE_FLAGS.items():
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=typ, default=None)
    p.add_argument("--reuse", action="store_true", default=None, help="single partition for all iterations")


def build_parser():
    g = _global_flags()
    parser = _Parser(prog="lrpr", description="Low rank phase retrieval by alternating minimization", parents=[g])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p_run = sub.add_parser("run", parents=[g], help="single run from a config file and/or flags")
    p_run.add_argument("--config", help="JSON document with instance/config sections")
    _instance_flags(p_run)
    p_run.add_argument("--rank-mode", choices=("known", "threshold"), default=None)
    p_run.add_argument("--omega", type=float, default=None, help="threshold; default 1.3 sigma_min^2/q")

    p_sweep = sub.add_parser("sweep", parents=[g], help="run an experiment file")
    p_sweep.add_argument("experiment")

    p_oracle = sub.add_parser("oracle", parents=[g], help="run the built-in acceptance suite")
    p_oracle.add_argument("--only", nargs="*", help="criterion ids, e.g. C1 C6")

    p_gen = sub.add_parser("gen", parents=[g], help="dump a ground truth and measurement set")
    _instance_flags(p_gen)
    p_gen.add_argument("--dump-y", action="store_true", help="also write y as little-endian float64")
    return parser


def _resolve_globals(args):
    args.seed = getattr(args, "seed", 0)
    args.out = getattr(args, "out", "lrpr_out")
    args.threads = getattr(args, "threads", 1)
    args.json = getattr(args, "json", False)
    args.field = getattr(args, "field", None)
    if args.threads < 1:
        raise UsageError("--threads must be >= 1")
    return args


def _instance_from(args, base=None):
    updates = {k: getattr(args, k) for k in INSTANCE_FLAGS if getattr(args, k, None) is not None}
    if getattr(args, "reuse", None):
        updates["reuse"] = True
    if args.field:
        updates["field"] = args.field
    base = base or Instance()
    return Instance(**{**base.__dict__, **updates})


def _emit(args, payload, text):
    if args.json:
        print(json.dumps(payload, indent=2))
    else:
        print(text)


def cmd_run(args):
    doc = {}
    if args.config:
        with open(args.config) as fh:
            doc = json.load(fh)
    inst = _instance_from(args, Instance(**doc.get("instance", {})))
    config = dict(doc.get("config", {}))
    config["T"] = inst.T
    if args.rank_mode == "known":
        config["rank_mode"] = {"known_rank": inst.r}
    elif args.rank_mode == "threshold":
        config["rank_mode"] = {"omega": args.omega if args.omega is not None else "auto"}
    seed = args.seed if args.seed is not None else doc.get("seed", 0)

    gt = generate_ground_truth(inst.n, inst.q, inst.r, inst.kappa, inst.field, seed)
    ms = measure(gt, SamplePlan(inst.m0, inst.m1, inst.T, inst.reuse), NoiseSpec.bounded(inst.eps_snr), seed)
    cfg = build_config(inst, config, gt, doc.get("oracle_params", True))
    cfg.seed = seed
    report = run(gt, ms, cfg)

    os.makedirs(args.out, exist_ok=True)
    report.write_csv(os.path.join(args.out, "trajectory.csv"))
    report.dump_json(os.path.join(args.out, "summary.json"))
    f = report.final
    _emit(
        args,
        report.to_dict()["final"],
        f"r_hat={f['r_hat']} final sef={f['sef']:.3e} matdist_rel={f['matdist_rel']:.3e} "
        f"time={f['total_time']:.2f}s -> {args.out}",
    )
    return EXIT_OK


def cmd_sweep(args):
    e = Experiment.load(args.experiment)
    if args.field:
        e.instance = Instance(**{**e.instance.__dict__, "field": args.field})
    if getattr(args, "seed_given", False):
        e.seed = args.seed
    rows, summary = run_experiment(e, out_dir=args.out, threads=args.threads)
    lines = [f"{p['value']}: success {p['success_fraction']:.2f}, median matdist_rel "
             f"{p['median_matdist_rel']}" for p in summary.get("points", [])]
    for key in ("loglog_slope", "monotone", "smoothed_success"):
        if key in summary:
            lines.append(f"{key}: {summary[key]}")
    _emit(args, summary, "\n".join(lines) + f"\n-> {args.out}")
    return EXIT_OK


def cmd_oracle(args):
    from .acceptance import run_all

    echo = None if args.json else print
    results = run_all(set(args.only) if args.only else None, echo=echo)
    if args.json:
        print(json.dumps([r.to_dict() for r in results], indent=2))
    return EXIT_OK if all(r.passed for r in results) else EXIT_RUNTIME


def cmd_gen(args):
    inst = _instance_from(args)
    seed = args.seed if args.seed is not None else 0
    gt = generate_ground_truth(inst.n, inst.q, inst.r, inst.kappa, inst.field, seed)
    ms = measure(gt, SamplePlan(inst.m0, inst.m1, inst.T, inst.reuse), NoiseSpec.bounded(inst.eps_snr), seed)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "ground_truth.json"), "w") as fh:
        json.dump(gt.to_dict(), fh)
    ms.dump_meta(os.path.join(args.out, "measurements.json"))
    if args.dump_y:
        ms.dump_y(os.path.join(args.out, "y.f64"))
    _emit(args, {"out": args.out, "mu": gt.mu, "kappa": gt.kappa}, f"wrote instance to {args.out}")
    return EXIT_OK


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "oracle": cmd_oracle, "gen": cmd_gen}


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parser.parse_args(argv)
        seed_given = hasattr(args, "seed")
        args = _resolve_globals(args)
        args.seed_given = seed_given
        if not seed_given:
            args.seed = None
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return COMMANDS[args.command](args)
    except (LRPRError, OSError, ValueError, ArithmeticError) as exc:
        print(f"lrpr: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
