"""Command-line interface: ``delayvax <subcommand> ...``.

Failures exit non-zero after printing one line to stderr of the form
``error: {"code": "<ErrorClass>", "message": "..."}``.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .errors import DelayVaxError, IoFailure
from .prob import DelayModel

SEED_ENV = "DELAYVAX_SEED"


def _add_model_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lam", type=float, default=1.0, help="infection rate per edge (default 1)")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--mu", type=float, help="rate of the exponential immunization delay")
    g.add_argument("--tau-mean", type=float, help="mean of the exponential immunization delay (default 10)")
    g.add_argument("--tau-fixed", type=float, help="deterministic immunization delay")


def _model(args) -> DelayModel:
    if args.tau_fixed is not None:
        return DelayModel.deterministic(args.lam, args.tau_fixed)
    if args.mu is not None:
        return DelayModel.exponential(args.lam, args.mu)
    return DelayModel.with_mean(args.lam, 10.0 if args.tau_mean is None else args.tau_mean)


def _seed(args, default: int = 0) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise DelayVaxError(f"{SEED_ENV}={env!r} is not an integer") from None
    return default


def _emit(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise IoFailure(f"cannot write {out}: {exc}") from None


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from None


def _load_tree(path):
    from .tree import RootedTree
    return RootedTree.from_text(_read(path))


def _sources(text):
    if text is None:
        return None
    return sorted({int(s) for s in text.split(",") if s.strip()})


# ---------------------------------------------------------------------- #
# Subcommands                                                              #
# ---------------------------------------------------------------------- #


def cmd_gen_tree(args) -> int:
    from .tree import OffspringDistribution, sample_galton_watson
    dist = OffspringDistribution.parse(args.family)
    t = sample_galton_watson(dist, args.size, np.random.default_rng(_seed(args)))
    _emit(t.to_text(), args.out)
    return 0


def cmd_plan(args) -> int:
    from .planner import PolicyKind, select
    t = _load_tree(args.tree)
    m = _model(args)
    sources = _sources(args.sources)
    if sources and sources != [t.root]:
        if args.policy != "greedy":
            raise DelayVaxError("multi-source planning supports only the greedy policy")
        from .multisource import MultiSourceInstance, decompose, plan_multisource
        inst = MultiSourceInstance(t, frozenset(sources))
        plan = plan_multisource(inst, args.k, m)
        if args.report:
            _emit(decompose(inst).to_report(), args.report)
    else:
        plan = select(t, args.k, PolicyKind.parse(args.policy), m)
    _emit(plan.to_csv(), args.out)
    return 0


def cmd_simulate(args) -> int:
    from .reward import VaccinationPlan, expected_reward
    from .sim import _mean_se, raw_csv_rows, simulate_counts
    t = _load_tree(args.tree)
    plan = VaccinationPlan.from_csv(_read(args.plan)) if args.plan else VaccinationPlan([], [])
    m = _model(args)
    saved, never, taus = simulate_counts(t, plan.nodes, m, args.runs, _seed(args))
    mean, se = _mean_se(saved)
    nmean, nse = _mean_se(never)
    lines = [
        "runs,mean_saved_by_plan,std_error,mean_never_infected,never_infected_std_error,expected_reward",
        f"{args.runs},{mean!r},{se!r},{nmean!r},{nse!r},{expected_reward(t, plan.nodes, m)!r}",
    ]
    _emit("\n".join(lines) + "\n", args.out)
    if args.emit_raw:
        _emit("\n".join(raw_csv_rows(saved, never, taus)) + "\n", args.emit_raw)
    return 0


def cmd_oracle(args) -> int:
    from .oracle import exhaustive_optimum
    from .planner import greedy_select
    from .reward import expected_reward
    t = _load_tree(args.tree)
    m = _model(args)
    res = exhaustive_optimum(t, args.k, m, cap=args.cap)
    greedy = greedy_select(t, args.k, m)
    g_val = expected_reward(t, greedy.nodes, m)
    ratio = g_val / res.best_value if res.best_value > 0 else 1.0
    out = {
        "k": args.k,
        "best_set": list(res.best_set),
        "best_value": res.best_value,
        "evaluated": res.evaluated,
        "greedy_set": greedy.nodes,
        "greedy_value": g_val,
        "greedy_ratio": ratio,
    }
    _emit(json.dumps(out, indent=2) + "\n", args.out)
    return 0


def cmd_experiment(args) -> int:
    from .experiment import ExperimentConfig, run_experiment
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None or os.environ.get(SEED_ENV) is not None:
        cfg.master_seed = _seed(args)
    if args.out is not None:
        cfg.output_dir = args.out
    if cfg.output_dir is None:
        cfg.output_dir = "results"
    result = run_experiment(cfg, threads=args.threads, emit_raw=args.emit_raw)
    print(f"wrote {len(result.rows)} rows to {Path(cfg.output_dir) / 'results.csv'}")
    return 0


def cmd_verify(args) -> int:
    from .acceptance import CRITERIA, run_criterion
    ids = sorted(CRITERIA) if not args.only else [int(i) for i in args.only.split(",")]
    failed = 0
    for cid in ids:
        res = run_criterion(cid, full=not args.smoke, seed=_seed(args))
        line = res.line(timing=args.timings)
        print(line, flush=True)
        failed += not res.passed
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="delayvax", description=__doc__.splitlines()[0])
    ap.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-tree", help="sample a Galton-Watson tree")
    p.add_argument("--family", default="binary_paper",
                   help="binary_paper, poisson:<mean> or discrete_uniform:<mean>")
    p.add_argument("--size", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gen_tree)

    p = sub.add_parser("plan", help="choose k nodes to vaccinate")
    p.add_argument("--tree", required=True)
    p.add_argument("--policy", default="greedy")
    p.add_argument("-k", type=int, default=5)
    p.add_argument("--sources", help="comma-separated infected nodes (default: the root)")
    p.add_argument("--report", help="write the multi-source decomposition report here")
    p.add_argument("--seed", type=int, help="accepted for uniformity; planning is deterministic")
    p.add_argument("--out")
    _add_model_args(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("simulate", help="Monte-Carlo estimate of a plan's saved nodes")
    p.add_argument("--tree", required=True)
    p.add_argument("--plan", help="plan CSV (rank,node_id,marginal_gain); empty plan if omitted")
    p.add_argument("--runs", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--emit-raw", metavar="PATH", help="write per-run outcomes here")
    p.add_argument("--out")
    _add_model_args(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("oracle", help="exhaustive optimum on a small tree")
    p.add_argument("--tree", required=True)
    p.add_argument("-k", type=int, default=2)
    p.add_argument("--cap", type=int, default=10_000_000)
    p.add_argument("--seed", type=int, help="accepted for uniformity; the oracle is deterministic")
    p.add_argument("--out")
    _add_model_args(p)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("experiment", help="run a policy sweep from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--emit-raw", action="store_true", help="also write raw.csv with every run")
    p.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="worker threads")
    p.add_argument("--out", help="output directory (overrides output_dir)")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--smoke", action="store_true", help="reduced sweep grid (2 trees x 200 runs)")
    p.add_argument("--only", help="comma-separated criterion numbers")
    p.add_argument("--seed", type=int)
    p.add_argument("--timings", action="store_true", help="append wall-clock times")
    p.set_defaults(func=cmd_verify)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        build_parser().error("argument --threads: must be >= 1")
    try:
        return args.func(args)
    except DelayVaxError as exc:
        print("error: " + json.dumps({"code": exc.code, "message": str(exc)}), file=sys.stderr)
        return 1
    except ValueError as exc:
        print("error: " + json.dumps({"code": "InvalidArgument", "message": str(exc)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
