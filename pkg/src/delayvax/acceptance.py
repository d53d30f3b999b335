"""Acceptance checks, one function per criterion.

Each check returns a :class:`CriterionResult`; ``delayvax verify`` and the
test suite print its :meth:`~CriterionResult.line`. Everything is seeded, so
a check produces the same verdict and detail on every run.
"""

from __future__ import annotations

import contextlib
import io
import math
import os
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .oracle import bfs_distances, brute_multisource_reward, exhaustive_optimum
from .planner import forest_greedy, greedy_select
from .prob import DelayModel, erlang_tail, survival_prob
from .reward import expected_reward, marginal_gain
from .sim import estimate_reward
from .tree import OffspringDistribution, RootedTree, build_from_parent_list, sample_galton_watson

APPROX_BOUND = 1.0 - 1.0 / math.e


@dataclass
class CriterionResult:
    id: int
    title: str
    passed: bool
    detail: str
    elapsed: float
    limit: float

    @property
    def in_time(self) -> bool:
        return self.elapsed <= self.limit

    def line(self, timing: bool = False) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"[{status}] {self.id}. {self.title}: {self.detail}"
        if timing:
            text += f" ({self.elapsed:.1f}s, limit {self.limit:.0f}s)"
        return text


# ---------------------------------------------------------------------- #
# Random instances                                                         #
# ---------------------------------------------------------------------- #


def random_tree(rng: np.random.Generator, n: int) -> RootedTree:
    """A random rooted tree on ``n`` nodes, mixing three shapes.

    Recursive trees (parent uniform over earlier nodes), path-heavy trees
    (parent among the last few nodes) and Galton-Watson trees.
    """
    if n == 1:
        return build_from_parent_list([None])
    kind = rng.integers(3)
    if kind == 0:
        parents = [None] + [int(rng.integers(v)) for v in range(1, n)]
    elif kind == 1:
        parents = [None] + [int(rng.integers(max(0, v - 3), v)) for v in range(1, n)]
    else:
        dist = OffspringDistribution("poisson", float(rng.uniform(1.2, 3.0)))
        return sample_galton_watson(dist, n, rng)
    # shuffle ids so the root is not always 0 and ids are not in BFS order
    perm = rng.permutation(n)
    relabeled: list = [None] * n
    for v, p in enumerate(parents):
        relabeled[perm[v]] = None if p is None else int(perm[p])
    return build_from_parent_list(relabeled)


def random_model(rng: np.random.Generator) -> DelayModel:
    lam = float(rng.uniform(0.3, 2.0))
    if rng.random() < 0.75:
        return DelayModel.exponential(lam, float(rng.uniform(0.05, 2.0)))
    return DelayModel.deterministic(lam, float(rng.uniform(0.0, 8.0)))


def _subset(rng, pool, size) -> list[int]:
    return [int(v) for v in rng.choice(pool, size=size, replace=False)] if size else []


def _non_root(t: RootedTree) -> np.ndarray:
    return np.array([v for v in range(t.n) if v != t.root])


# ---------------------------------------------------------------------- #
# 1. Formula consistency                                                   #
# ---------------------------------------------------------------------- #


def _path(n: int) -> RootedTree:
    return build_from_parent_list([None] + list(range(n - 1)))


def check_formula_consistency(rng, full=True) -> tuple[bool, str]:
    worst, cases = 0.0, 1000
    for _ in range(cases):
        t = random_tree(rng, int(rng.integers(2, 101)))
        m = random_model(rng)
        pool = _non_root(t)
        size = int(rng.integers(0, len(pool)))
        chosen = _subset(rng, pool, size + 1)
        S, u = chosen[:-1], chosen[-1]
        lhs = marginal_gain(t, S, u, m)
        rhs = expected_reward(t, S + [u], m) - expected_reward(t, S, m)
        worst = max(worst, abs(lhs - rhs))
    ok = worst <= 1e-10

    # closed forms on the small fixed trees, over a few delay models
    path3, path4 = _path(3), _path(4)
    forked = build_from_parent_list([None, 0, 1, 0, 3])
    reductions = 0
    for m in (DelayModel.exponential(1, 1), DelayModel.exponential(0.7, 0.2),
              DelayModel.deterministic(1.3, 2.5)):
        p1, p2 = survival_prob(m, 1), survival_prob(m, 2)
        checks = [
            (expected_reward(path3, [1], m), 1 * p1),
            (marginal_gain(path3, [], 1, m), 1 * p1),
            (expected_reward(path4, [1, 2], m), (2 - 1) * p1 + 1 * p2),
            (expected_reward(forked, [1, 3], m), 1 * p1 + 1 * p1),
        ]
        for got, want in checks:
            reductions += 1
            ok &= got == want
    unit = DelayModel.exponential(1, 1)
    ok &= expected_reward(path3, [1], unit) == 0.5
    ok &= expected_reward(path4, [1, 2], unit) == 1.25
    ok &= expected_reward(forked, [1, 3], unit) == 1.0
    return ok, f"{cases} random cases, max |gain - reward difference| = {worst:.2e}; {reductions} closed-form reductions exact"


# ---------------------------------------------------------------------- #
# 2. Monotone submodularity                                                #
# ---------------------------------------------------------------------- #


def check_submodularity(rng, full=True) -> tuple[bool, str]:
    worst_sub, worst_mono, strict_fail, leaf_fail, cases = 0.0, 0.0, 0, 0, 1000
    for _ in range(cases):
        t = random_tree(rng, int(rng.integers(2, 101)))
        m = random_model(rng)
        pool = _non_root(t)
        size2 = int(rng.integers(0, len(pool)))
        chosen = _subset(rng, pool, size2 + 1)
        S2, u = chosen[:-1], chosen[-1]
        S1 = [s for s in S2 if rng.random() < 0.5]
        d1, d2 = marginal_gain(t, S1, u, m), marginal_gain(t, S2, u, m)
        worst_sub = max(worst_sub, d2 - d1)
        worst_mono = max(worst_mono, -d2)
        if m.kind == "exponential":
            if t.desc_count[u] > 0:
                strict_fail += not d2 > 0
            else:
                leaf_fail += d2 != 0.0
    ok = worst_sub <= 1e-12 and worst_mono <= 1e-12 and strict_fail == 0 and leaf_fail == 0
    return ok, (f"{cases} cases, max violation {max(worst_sub, 0):.1e} (submodular) "
                f"{max(worst_mono, 0):.1e} (monotone); non-leaf gains > 0 failures {strict_fail}, "
                f"leaf gains != 0 failures {leaf_fail}")


# ---------------------------------------------------------------------- #
# 3. Approximation bound                                                   #
# ---------------------------------------------------------------------- #


def check_approximation(rng, full=True) -> tuple[bool, str]:
    ratios = []
    for _ in range(50):
        t = random_tree(rng, int(rng.integers(5, 26)))
        m = random_model(rng)
        for k in (1, 2, 3):
            best = exhaustive_optimum(t, k, m).best_value
            got = expected_reward(t, greedy_select(t, k, m).nodes, m)
            ratios.append(1.0 if best <= 0 else got / best)
    r = np.array(ratios)
    ok = bool(r.min() >= APPROX_BOUND)
    q = np.quantile(r, [0.0, 0.05, 0.5])
    return ok, (f"{len(r)} instances, ratio min {q[0]:.4f} p5 {q[1]:.4f} median {q[2]:.4f}, "
                f"optimal in {int(np.sum(r >= 1 - 1e-12))}; bound {APPROX_BOUND:.4f}")


# ---------------------------------------------------------------------- #
# 4. Analytic against Monte-Carlo                                          #
# ---------------------------------------------------------------------- #


def check_mc_agreement(rng, full=True) -> tuple[bool, str]:
    m = DelayModel.exponential(1.0, 0.1)
    agree, zs = 0, []
    for idx in range(20):
        t = sample_galton_watson(OffspringDistribution("poisson", 3.0), 200, rng)
        plan = greedy_select(t, 5, m).nodes
        mean, se = estimate_reward(t, plan, m, 10_000, seed=int(rng.integers(2**62)))
        z = (mean - expected_reward(t, plan, m)) / se if se > 0 else 0.0
        zs.append(z)
        agree += abs(z) <= 3
    return agree >= 19, f"{agree}/20 within 3 SE (need 19), max |z| = {max(map(abs, zs)):.2f}"


# ---------------------------------------------------------------------- #
# 5. Survival kernel against races                                         #
# ---------------------------------------------------------------------- #


KERNEL_GRID = [(lam, mu, d) for lam, mu in ((1.0, 0.1), (1.0, 1.0), (2.0, 0.5), (0.5, 2.0))
               for d in (1, 3, 8)]
FIXED_GRID = [(lam, x, d) for lam, x in ((1.0, 2.0), (1.0, 10.0), (2.5, 3.0), (0.5, 1.0))
              for d in (1, 3, 8)]


def _race_z(hits: int, samples: int, p: float) -> float:
    se = math.sqrt(p * (1 - p) / samples)
    return (hits / samples - p) / se


def _erlang_race(rng, lam, d, samples) -> np.ndarray:
    z = np.zeros(samples)
    for _ in range(d):
        z += rng.standard_exponential(samples)
    return z / lam


def check_kernel(rng, full=True) -> tuple[bool, str]:
    samples = 1_000_000
    zmax, kernel_err = 0.0, 0.0
    for lam, mu, d in KERNEL_GRID:
        z = _erlang_race(rng, lam, d, samples)
        tau = rng.standard_exponential(samples) / mu
        p = 1 - (lam / (lam + mu)) ** d
        kernel_err = max(kernel_err, abs(survival_prob(DelayModel.exponential(lam, mu), d) - p))
        zmax = max(zmax, abs(_race_z(int(np.count_nonzero(z > tau)), samples, p)))
    zfix = 0.0
    for lam, x, d in FIXED_GRID:
        z = _erlang_race(rng, lam, d, samples)
        p = erlang_tail(d, lam * x)
        zfix = max(zfix, abs(_race_z(int(np.count_nonzero(z > x)), samples, p)))
    ok = zmax <= 3 and zfix <= 3 and kernel_err <= 1e-14
    return ok, (f"{len(KERNEL_GRID)} exponential points max |z| = {zmax:.2f} "
                f"(kernel vs closed form {kernel_err:.1e}); "
                f"{len(FIXED_GRID)} fixed-delay points max |z| = {zfix:.2f} (10^6 races each)")


# ---------------------------------------------------------------------- #
# 6. Policy comparison trends                                              #
# ---------------------------------------------------------------------- #


SWEEP_POLICIES = ("greedy", "top_k_descendants", "top_k_nns", "top_k_frontiers", "top_k_children")
TAU_SWEEP = [2.0, 4.0, 6.0, 8.0, 10.0]


def sweep_grids(full: bool, seed: int) -> list[tuple[str, dict]]:
    """The sweep configurations, as ``(name, config mapping)`` pairs."""
    trees, runs = (10, 1000) if full else (2, 200)
    base = {"trees_per_point": trees, "runs_per_tree": runs, "master_seed": seed,
            "policies": list(SWEEP_POLICIES), "lambda": 1.0}
    grids = [
        ("binary E[tau] sweep", {**base, "family": "binary_paper", "sizes": [100, 500, 1000],
                                 "k_values": [5], "expected_tau_values": TAU_SWEEP}),
        ("binary k sweep", {**base, "family": "binary_paper", "sizes": [100, 500, 1000],
                            "k_values": list(range(1, 11)), "expected_tau_values": [10.0]}),
    ]
    for fam in ("discrete_uniform", "poisson"):
        grids.append((f"{fam} E[tau] sweep", {**base, "family": f"{fam}:3", "sizes": [1000],
                                              "k_values": [5], "expected_tau_values": TAU_SWEEP}))
        grids.append((f"{fam} k sweep", {**base, "family": f"{fam}:3", "sizes": [1000],
                                         "k_values": list(range(1, 11)), "expected_tau_values": [10.0]}))
        for mean in (2, 3, 4, 5):
            grids.append((f"{fam}:{mean} offspring sweep",
                          {**base, "family": f"{fam}:{mean}", "sizes": [1000], "k_values": [5],
                           "expected_tau_values": [10.0]}))
    return grids


def check_sweeps(rng, full=True, seed=0) -> tuple[bool, str]:
    from .experiment import ExperimentConfig, run_experiment, summarize

    dominance_fail, tau_fail, eta_fail, points = [], [], [], 0
    by_family: dict = {}
    for name, mapping in sweep_grids(full, seed):
        cfg = ExperimentConfig.from_mapping(mapping)
        summary = summarize(run_experiment(cfg, write=False).rows)
        keys = {k[:4] for k in summary}
        for key in sorted(keys):
            points += 1
            g = summary[key + ("greedy",)].mean
            for pol in SWEEP_POLICIES[1:]:
                if summary[key + (pol,)].mean > g:
                    dominance_fail.append(f"{name} {key} {pol}")
        if "E[tau] sweep" in name:
            for fam, n, k in sorted({key[:3] for key in keys}):
                for pol in SWEEP_POLICIES:
                    series = [summary[(fam, n, k, e, pol)] for e in TAU_SWEEP]
                    for a, b in zip(series, series[1:]):
                        if b.mean > a.mean + 2 * math.hypot(a.se, b.se):
                            tau_fail.append(f"{name} n={n} {pol}")
        if "offspring" in name:
            (key,) = [k for k in summary if k[4] == "greedy"]
            by_family.setdefault(name.split(":")[0], []).append(summary[key])
    for fam, series in by_family.items():
        for a, b in zip(series, series[1:]):
            if b.mean > a.mean + 2 * math.hypot(a.se, b.se):
                eta_fail.append(fam)
    ok = not (dominance_fail or tau_fail or eta_fail)
    detail = (f"{points} grid points ({'10 trees x 1000 runs' if full else '2 trees x 200 runs'}); "
              f"dominance failures {len(dominance_fail)}, E[tau] trend failures {len(tau_fail)}, "
              f"offspring-mean trend failures {len(eta_fail)}")
    bad = dominance_fail + tau_fail + eta_fail
    if bad:
        detail += "; first: " + bad[0]
    return ok, detail


# ---------------------------------------------------------------------- #
# 7. Multi-source reductions                                               #
# ---------------------------------------------------------------------- #


def _connected_sources(rng, t: RootedTree, count: int) -> list[int]:
    block = {int(rng.integers(t.n))}
    while len(block) < count:
        frontier = sorted({w for v in block for w in t.neighbors(v)} - block)
        if not frontier:
            break
        block.add(int(rng.choice(frontier)))
    return sorted(block)


def check_multisource(rng, full=True) -> tuple[bool, str]:
    from .multisource import (MultiSourceInstance, composite_reward, decompose, normalize_root,
                              plan_multisource, split_connected_sources)

    # connected sources: the forest greedy and the multi-source planner agree
    equal, compared = 0, 0
    while compared < 100:
        t = random_tree(rng, int(rng.integers(4, 80)))
        inst = MultiSourceInstance(t, frozenset(_connected_sources(rng, t, int(rng.integers(1, 5)))))
        pieces = split_connected_sources(normalize_root(inst))
        healthy = sum(p.tree.n - 1 for p in pieces)
        if healthy == 0:
            continue
        m = random_model(rng)
        k = int(rng.integers(1, min(healthy, 6) + 1))
        fg = forest_greedy([p.tree for p in pieces], k, m)
        mapped = [pieces[c].ids[u] for c, u in zip(fg.components, fg.nodes)]
        ms = plan_multisource(inst, k, m)
        compared += 1
        equal += mapped == ms.nodes and fg.gains == ms.gains and fg.components == ms.components

    # partition property and residual geometry
    partition_bad, depth_bad, residuals = 0, 0, 0
    for _ in range(200):
        t = random_tree(rng, int(rng.integers(3, 120)))
        count = int(rng.integers(1, min(6, t.n)))
        src = frozenset(int(v) for v in rng.choice(t.n, size=count, replace=False))
        dec = decompose(MultiSourceInstance(t, src))
        seen: list[int] = []
        for c in dec.components:
            seen.extend(c.ids[v] for v in c.healthy)
            assert sorted(c.ids[s] for s in c.sources) == sorted(set(c.ids[s] for s in c.sources))
        partition_bad += sorted(seen) != sorted(set(range(t.n)) - src)
        edges = t.edges()
        for c in dec.residual_trees:
            residuals += 1
            for s, depth in c.depths().items():
                dist = bfs_distances(t.n, edges, s)
                depth_bad += any(int(depth[i]) != dist[g] for i, g in enumerate(c.ids))

    # residual reward against path arithmetic
    worst, r_cases = 0.0, 0
    while r_cases < 200:
        t = random_tree(rng, int(rng.integers(4, 21)))
        count = int(rng.integers(2, min(5, t.n - 1)))
        src = frozenset(int(v) for v in rng.choice(t.n, size=count, replace=False))
        dec = decompose(MultiSourceInstance(t, src))
        if not dec.residual_trees:
            continue
        m = random_model(rng)
        for c in dec.residual_trees:
            local_edges = c.tree.edges()
            healthy = c.healthy
            S = _subset(rng, np.array(healthy), int(rng.integers(0, len(healthy) + 1)))
            got = c.reward(S, m)
            want = brute_multisource_reward(c.tree.n, local_edges, c.sources, S, m)
            worst = max(worst, abs(got - want))
            r_cases += 1
        S_all = [v for v in range(t.n) if v not in src and rng.random() < 0.3]
        composite_reward(dec, S_all, m)

    ok = equal == compared and partition_bad == 0 and depth_bad == 0 and worst <= 1e-12
    return ok, (f"forest/multi-source plans identical {equal}/{compared}; partition failures "
                f"{partition_bad}/200 ({residuals} residual pieces, depth mismatches {depth_bad}); "
                f"{r_cases} residual rewards, max error {worst:.1e}")


# ---------------------------------------------------------------------- #
# 8. CLI determinism                                                       #
# ---------------------------------------------------------------------- #


def _cli(argv: list[str]) -> tuple[int, str]:
    from .cli import main
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue() + err.getvalue()


def _snapshot(directory: Path) -> dict:
    return {p.relative_to(directory).as_posix(): p.read_bytes()
            for p in sorted(directory.rglob("*")) if p.is_file()}


def check_cli(rng, full=True, seed=0) -> tuple[bool, str]:
    s = str(seed)
    config = ("family: binary_paper\nsizes: [60]\nk_values: [1, 3]\nexpected_tau_values: [2, 10]\n"
              "trees_per_point: 2\nruns_per_tree: 50\nmaster_seed: 3\n")
    scripts = {
        "gen-tree": [["gen-tree", "--size", "40", "--seed", s, "--out", "tree.txt"],
                     ["gen-tree", "--size", "15", "--family", "poisson:2", "--seed", s]],
        "plan": [["plan", "--tree", "tree.txt", "-k", "4", "--out", "plan.csv"],
                 ["plan", "--tree", "tree.txt", "-k", "3", "--policy", "top_k_frontiers", "--tau-fixed", "3"],
                 ["plan", "--tree", "tree.txt", "-k", "3", "--sources", "0,5,20", "--report", "report.json"]],
        "simulate": [["simulate", "--tree", "tree.txt", "--plan", "plan.csv", "--runs", "300",
                      "--seed", s, "--emit-raw", "raw.csv"]],
        "oracle": [["oracle", "--tree", "small.txt", "-k", "2"]],
        "experiment": [["experiment", "--config", "cfg.yaml", "--out", "exp", "--emit-raw"],
                       ["--threads", "3", "experiment", "--config", "cfg.yaml", "--out", "exp3"]],
        "verify": [["verify", "--only", "1", "--seed", s]],
    }
    outputs = []
    cwd = os.getcwd()
    for attempt in range(2):
        with tempfile.TemporaryDirectory() as tmp:
            os.chdir(tmp)
            try:
                Path("cfg.yaml").write_text(config)
                _cli(["gen-tree", "--size", "12", "--seed", s, "--out", "small.txt"])
                transcript = {}
                for name, runs in scripts.items():
                    transcript[name] = [_cli(argv) for argv in runs]
                transcript["files"] = _snapshot(Path(tmp))
            finally:
                os.chdir(cwd)
        outputs.append(transcript)
    first, second = outputs
    codes_ok = all(code == 0 for name in scripts for code, _ in first[name])
    differing = [name for name in [*scripts, "files"] if first[name] != second[name]]
    threads_ok = ({k: v for k, v in first["files"].items() if k.startswith("exp/results")}
                  == {k.replace("exp3", "exp"): v for k, v in first["files"].items()
                      if k.startswith("exp3/")})
    ok = codes_ok and not differing and threads_ok
    return ok, (f"{len(scripts)} subcommands run twice, {len(first['files'])} output files; "
                f"differences: {differing or 'none'}; all exit 0: {codes_ok}; "
                f"thread count invariant: {threads_ok}")


# ---------------------------------------------------------------------- #
# Registry                                                                 #
# ---------------------------------------------------------------------- #


@dataclass(frozen=True)
class Criterion:
    title: str
    check: Callable
    limit: float
    smoke_limit: float
    seeded_config: bool = False


CRITERIA = {
    1: Criterion("formula consistency", check_formula_consistency, 10, 10),
    2: Criterion("monotone submodularity", check_submodularity, 10, 10),
    3: Criterion("greedy approximation bound", check_approximation, 60, 60),
    4: Criterion("analytic vs Monte-Carlo reward", check_mc_agreement, 120, 120),
    5: Criterion("survival kernel vs races", check_kernel, 60, 60),
    6: Criterion("policy dominance and trends", check_sweeps, 1800, 120, True),
    7: Criterion("multi-source reductions", check_multisource, 60, 60),
    8: Criterion("CLI determinism", check_cli, 300, 300, True),
}


def run_criterion(cid: int, full: bool = True, seed: int = 0) -> CriterionResult:
    if cid not in CRITERIA:
        raise ValueError(f"unknown criterion {cid}; choose from {sorted(CRITERIA)}")
    crit = CRITERIA[cid]
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), cid]))
    kwargs = {"seed": seed} if crit.seeded_config else {}
    start = time.perf_counter()
    passed, detail = crit.check(rng, full=full, **kwargs)
    elapsed = time.perf_counter() - start
    limit = crit.limit if full else crit.smoke_limit
    return CriterionResult(cid, crit.title, bool(passed), detail, elapsed, limit)
