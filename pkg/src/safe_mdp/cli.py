"""Command-line entry point: solve, safe, benchmark, bounds.

Exit codes: 0 success (a baseline fallback is a success), 2 usage or input
error, 3 internal invariant violation.
"""

import argparse
import dataclasses
import json
import logging
import sys

import numpy as np

from . import io
from .benchmark import BenchmarkConfig, run_experiment
from .bounds import bound_report_set
from .mdp import return_of, solve_optimal
from .safe import (METHODS, RbcOptions, SubgradientSchedule, solve_augmented_rmdp, solve_ramdp,
                   solve_rbc, solve_rmdp_safe)
from .uncertainty import UncertaintySet, error_from_counts

EXIT_OK, EXIT_USAGE, EXIT_INTERNAL = 0, 2, 3
log = logging.getLogger("safe_mdp")


class UsageError(Exception):
    pass


def _emit(obj):
    sys.stdout.write(json.dumps(obj, indent=1) + "\n")


def _error_source(doc, source, delta):
    if source == "inline":
        if doc.error is None:
            raise UsageError("--error inline needs an 'error' field in the model")
        return doc.error
    if doc.counts is None:
        raise UsageError("--error counts needs a 'counts' field in the model")
    return error_from_counts(doc.counts, delta)


def cmd_solve(args):
    doc = io.load_model(args.model)
    pi, _ = solve_optimal(doc.mdp)
    _emit({"policy": io.policy_json(pi), "return": return_of(doc.mdp, pi)})


def cmd_safe(args):
    if args.method == "rbc" and args.baseline_return is not None:
        raise UsageError("rbc does not take --baseline-return")
    if args.method != "rbc" and args.baseline_return is None:
        raise UsageError(f"{args.method} requires --baseline-return")
    doc = io.load_model(args.model)
    m = doc.mdp
    baseline = io.load_policy(args.baseline_policy, m.n_actions)
    if baseline.n_states != m.n_states:
        raise UsageError("baseline policy does not match the model's state count")
    e = _error_source(doc, args.error, args.delta)
    uset = UncertaintySet(m, e)
    if args.method == "ramdp":
        res = solve_ramdp(m, e, baseline, args.baseline_return)
    elif args.method == "rmdp":
        res = solve_rmdp_safe(uset, baseline, args.baseline_return)
    elif args.method == "armdp":
        sched = SubgradientSchedule.default(m)
        overrides = {k: v for k, v in (("max_iters", args.max_iters), ("lambda_cap", args.lambda_cap))
                     if v is not None}
        sched = dataclasses.replace(sched, **overrides)
        res = solve_augmented_rmdp(uset, baseline, args.baseline_return, sched=sched)
    else:
        res = solve_rbc(uset, baseline, RbcOptions(restarts=args.restarts, seed=args.seed))
    out = res.to_dict()
    out["augmented"] = res.policy.n_states != m.n_states
    _emit(out)


def cmd_benchmark(args):
    if args.config:
        try:
            with open(args.config) as f:
                cfg = BenchmarkConfig.from_dict(json.load(f))
        except OSError as exc:
            raise io.DocumentError(f"cannot read {args.config}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise io.DocumentError(f"{args.config}: invalid JSON ({exc.msg})") from exc
    else:
        cfg = BenchmarkConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    res = run_experiment(cfg, threads=args.threads)
    res.write_csv(args.out)
    meta_path = args.meta or args.out + ".meta.json"
    res.write_meta(meta_path)
    log.info("wrote %d rows to %s and metadata to %s", len(res.rows), args.out, meta_path)


def cmd_bounds(args):
    true_doc = io.load_model(args.model_true)
    sim_doc = io.load_model(args.model_sim)
    mt, ms = true_doc.mdp, sim_doc.mdp
    if (mt.n_states, mt.n_actions) != (ms.n_states, ms.n_actions):
        raise UsageError("true and simulator models have different dimensions")
    if mt.discount != ms.discount or mt.r_max != ms.r_max or not np.array_equal(mt.reward, ms.reward):
        raise UsageError("true and simulator models must share rewards, discount and r_max")
    if sim_doc.error is not None:
        e = sim_doc.error
    elif sim_doc.counts is not None:
        e = error_from_counts(sim_doc.counts, args.delta)
    else:
        raise UsageError("simulator model needs 'error' or 'counts'")
    baseline = io.load_policy(args.policy, ms.n_actions)
    if baseline.n_states != ms.n_states:
        raise UsageError("policy does not match the model's state count")
    reports = bound_report_set(mt, ms, e, baseline)
    _emit([r.to_dict() for r in reports])


def build_parser():
    p = argparse.ArgumentParser(prog="safe-mdp", description="Safe policy improvement for tabular MDPs.")
    p.add_argument("-v", "--verbose", action="store_true", help="log to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="optimal policy and return of a model")
    s.add_argument("model")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("safe", help="safe policy search against a baseline")
    s.add_argument("model")
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--baseline-policy", required=True)
    s.add_argument("--baseline-return", type=float)
    s.add_argument("--error", choices=("inline", "counts"), default="inline",
                   help="take e from the model's 'error' field or derive it from 'counts'")
    s.add_argument("--delta", type=float, default=0.05)
    s.add_argument("--max-iters", type=int, help="armdp: subgradient iterations")
    s.add_argument("--lambda-cap", type=float, help="armdp: multiplier cap")
    s.add_argument("--restarts", type=int, default=5, help="rbc: alternation restarts")
    s.add_argument("--seed", type=int, default=0, help="rbc: random restarts")
    s.set_defaults(func=cmd_safe)

    s = sub.add_parser("benchmark", help="run the sample-size experiment")
    s.add_argument("--config", help="JSON with BenchmarkConfig fields (defaults otherwise)")
    s.add_argument("--out", required=True, help="CSV path")
    s.add_argument("--meta", help="metadata JSON path (default: <out>.meta.json)")
    s.add_argument("--seed", type=int)
    s.add_argument("--threads", type=int, help="worker processes (default SAFE_MDP_THREADS or all CPUs)")
    s.set_defaults(func=cmd_benchmark)

    s = sub.add_parser("bounds", help="performance-loss bounds against a true model")
    s.add_argument("model_true")
    s.add_argument("model_sim")
    s.add_argument("--policy", required=True, help="baseline policy")
    s.add_argument("--delta", type=float, default=0.05)
    s.set_defaults(func=cmd_bounds)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except (UsageError, io.DocumentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (AssertionError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
