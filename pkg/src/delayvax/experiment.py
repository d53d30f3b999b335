"""Parameter sweeps comparing vaccination policies on random trees.

Config file
-----------
A flat YAML mapping. Every key is optional; defaults follow the standard
setup (lam = 1, E[tau] = 10, k = 5, n = 1000, Poisson offspring with mean 3,
10 trees x 1000 runs)::

    family: binary_paper          # or poisson:<mean>, discrete_uniform:<int mean>
    sizes: [100, 500, 1000]
    k_values: [5]
    expected_tau_values: [2, 4, 6, 8, 10]
    lambda: 1.0
    tau_kind: exponential         # or deterministic (tau fixed at each value)
    trees_per_point: 10
    runs_per_tree: 1000
    policies: [greedy, top_k_descendants, top_k_nns, top_k_frontiers]
    master_seed: 0
    output_dir: results

Seeding
-------
Tree ``j`` of size ``n`` uses ``tree_seed = SeedSequence([master_seed, n, j])``
(first 63 bits); the tree is drawn from ``default_rng(tree_seed)`` and run
``r`` on it from ``SeedSequence(tree_seed, spawn_key=(r,))``. A tree and its
runs are therefore shared by every ``k``, ``E[tau]`` and policy, which makes
policy and parameter comparisons paired, and any single grid point can be
recomputed on its own.

Output
------
``results.csv``, one row per (n, k, E[tau], policy, tree) in that nesting
order; with ``emit_raw`` also ``raw.csv`` holding every run.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from .errors import ConfigInvalid, IoFailure
from .planner import PolicyKind, select
from .prob import DelayModel
from .reward import expected_reward
from .sim import RunDraws, _mean_se
from .tree import OffspringDistribution, sample_galton_watson

RESULT_COLUMNS = (
    "family", "n", "k", "e_tau", "policy", "tree_seed",
    "mean_saved_fraction", "std_error",
    "mean_never_infected_fraction", "never_infected_std_error",
    "expected_saved_fraction",
)
RAW_COLUMNS = ("family", "n", "k", "e_tau", "policy", "tree_seed", "run",
               "saved_by_plan", "never_infected", "tau_sample")

ALL_POLICIES = ("greedy", "top_k_descendants", "top_k_nns", "top_k_frontiers", "top_k_children")

SCHEMA = """\
family: binary_paper | poisson:<mean> | discrete_uniform:<integer mean>
sizes: list of integers >= 2
k_values: list of integers >= 1
expected_tau_values: list of reals > 0 (>= 0 for tau_kind deterministic)
lambda: real > 0
tau_kind: exponential | deterministic
trees_per_point: integer >= 1
runs_per_tree: integer >= 1
policies: list from greedy, top_k_descendants, top_k_nns, top_k_frontiers[:layers], top_k_children
master_seed: integer >= 0
output_dir: path"""


@dataclass
class ExperimentConfig:
    tree_family: OffspringDistribution = field(default_factory=lambda: OffspringDistribution("poisson", 3))
    sizes: list = field(default_factory=lambda: [1000])
    k_values: list = field(default_factory=lambda: [5])
    expected_tau_values: list = field(default_factory=lambda: [10.0])
    lam: float = 1.0
    tau_kind: str = "exponential"
    trees_per_point: int = 10
    runs_per_tree: int = 1000
    policies: list = field(default_factory=lambda: [PolicyKind(p) for p in ALL_POLICIES])
    master_seed: int = 0
    output_dir: Optional[str] = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        problems = []
        for name in ("sizes", "k_values", "expected_tau_values", "policies"):
            if not getattr(self, name):
                problems.append(f"{name} must be a non-empty list")
        if any(int(n) < 2 for n in self.sizes):
            problems.append("sizes must be >= 2")
        if any(int(k) < 1 for k in self.k_values):
            problems.append("k_values must be >= 1")
        if self.sizes and self.k_values and max(self.k_values) > min(self.sizes) - 1:
            problems.append(f"k = {max(self.k_values)} exceeds the vaccinable nodes of n = {min(self.sizes)}")
        lo = 0.0 if self.tau_kind == "deterministic" else 1e-300
        if any(not float(e) >= lo for e in self.expected_tau_values):
            problems.append("expected_tau_values out of range")
        if self.tau_kind not in ("exponential", "deterministic"):
            problems.append(f"tau_kind must be exponential or deterministic, got {self.tau_kind!r}")
        if not self.lam > 0:
            problems.append("lambda must be > 0")
        if self.trees_per_point < 1:
            problems.append("trees_per_point must be >= 1")
        if self.runs_per_tree < 1:
            problems.append("runs_per_tree must be >= 1")
        if self.master_seed < 0:
            problems.append("master_seed must be >= 0")
        if problems:
            raise ConfigInvalid("; ".join(problems) + "\nschema:\n" + SCHEMA)

    def model(self, e_tau: float) -> DelayModel:
        if self.tau_kind == "deterministic":
            return DelayModel.deterministic(self.lam, e_tau)
        return DelayModel.with_mean(self.lam, e_tau)

    @classmethod
    def from_mapping(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigInvalid("config must be a key-value mapping\nschema:\n" + SCHEMA)
        known = {"family", "sizes", "k_values", "expected_tau_values", "lambda", "tau_kind",
                 "trees_per_point", "runs_per_tree", "policies", "master_seed", "output_dir"}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigInvalid(f"unknown config keys {unknown}\nschema:\n" + SCHEMA)
        kw = {}
        try:
            if "family" in data:
                kw["tree_family"] = OffspringDistribution.parse(str(data["family"]))
            for key in ("sizes", "k_values"):
                if key in data:
                    kw[key] = [int(v) for v in _as_list(data[key])]
            if "expected_tau_values" in data:
                kw["expected_tau_values"] = [float(v) for v in _as_list(data["expected_tau_values"])]
            if "lambda" in data:
                kw["lam"] = float(data["lambda"])
            if "policies" in data:
                kw["policies"] = [PolicyKind.parse(str(p)) for p in _as_list(data["policies"])]
            for key in ("trees_per_point", "runs_per_tree", "master_seed"):
                if key in data:
                    kw[key] = int(data[key])
            if "tau_kind" in data:
                kw["tau_kind"] = str(data["tau_kind"])
            if "output_dir" in data:
                kw["output_dir"] = str(data["output_dir"])
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigInvalid):
                raise
            raise ConfigInvalid(f"{exc}\nschema:\n{SCHEMA}") from None
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise IoFailure(f"cannot read config {path}: {exc}") from None
        except yaml.YAMLError as exc:
            raise ConfigInvalid(f"config {path} is not valid YAML: {exc}") from None
        return cls.from_mapping(data or {})


def _as_list(v) -> list:
    return list(v) if isinstance(v, (list, tuple)) else [v]


def tree_seed(master_seed: int, n: int, index: int) -> int:
    state = np.random.SeedSequence([int(master_seed), int(n), int(index)]).generate_state(1, np.uint64)
    return int(state[0] >> np.uint64(1))


@dataclass
class ExperimentResult:
    rows: list
    raw: Optional[list] = None

    def to_csv(self) -> str:
        return _csv(RESULT_COLUMNS, self.rows)

    def raw_csv(self) -> str:
        return _csv(RAW_COLUMNS, self.raw or [])


def _csv(columns, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _tree_task(cfg: ExperimentConfig, size_idx: int, tree_idx: int, emit_raw: bool):
    n = int(cfg.sizes[size_idx])
    seed = tree_seed(cfg.master_seed, n, tree_idx)
    t = sample_galton_watson(cfg.tree_family, n, np.random.default_rng(seed))
    draws = RunDraws(t, seed, cfg.runs_per_tree)
    k_max = max(cfg.k_values)
    out, raw = [], []
    for tau_idx, e_tau in enumerate(cfg.expected_tau_values):
        m = cfg.model(e_tau)
        # every policy's k-plan is the first k picks of its k_max-plan
        full = [select(t, k_max, pol, m).nodes for pol in cfg.policies]
        for k_idx, k in enumerate(cfg.k_values):
            for pol_idx, pol in enumerate(cfg.policies):
                plan = full[pol_idx][:k]
                saved, never = draws.outcome_counts(plan, m)
                s_mean, s_se = _mean_se(saved)
                v_mean, v_se = _mean_se(never)
                row = {
                    "family": cfg.tree_family.label, "n": n, "k": int(k), "e_tau": float(e_tau),
                    "policy": pol.label, "tree_seed": seed,
                    "mean_saved_fraction": s_mean / n, "std_error": s_se / n,
                    "mean_never_infected_fraction": v_mean / n, "never_infected_std_error": v_se / n,
                    "expected_saved_fraction": expected_reward(t, plan, m) / n,
                }
                key = (size_idx, k_idx, tau_idx, pol_idx, tree_idx)
                out.append((key, row))
                if emit_raw:
                    taus = draws.tau(m)
                    for r in range(draws.runs):
                        raw.append((key + (r,), {
                            **{c: row[c] for c in RAW_COLUMNS[:6]}, "run": r,
                            "saved_by_plan": int(saved[r]), "never_infected": int(never[r]),
                            "tau_sample": float(taus[r]),
                        }))
    return out, raw


def run_experiment(cfg: ExperimentConfig, threads: int = 1, emit_raw: bool = False,
                   write: bool = True) -> ExperimentResult:
    """Run the sweep; writes ``results.csv`` (and ``raw.csv``) under ``cfg.output_dir``."""
    tasks = [(i, j) for i in range(len(cfg.sizes)) for j in range(cfg.trees_per_point)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ij: _tree_task(cfg, ij[0], ij[1], emit_raw), tasks))
    else:
        parts = [_tree_task(cfg, i, j, emit_raw) for i, j in tasks]
    rows = sorted((kr for part, _ in parts for kr in part), key=lambda kr: kr[0])
    result = ExperimentResult([r for _, r in rows])
    if emit_raw:
        raw = sorted((kr for _, part in parts for kr in part), key=lambda kr: kr[0])
        result.raw = [r for _, r in raw]
    if write and cfg.output_dir is not None:
        try:
            out = Path(cfg.output_dir)
            out.mkdir(parents=True, exist_ok=True)
            (out / "results.csv").write_text(result.to_csv())
            if emit_raw:
                (out / "raw.csv").write_text(result.raw_csv())
        except OSError as exc:
            raise IoFailure(f"cannot write results to {cfg.output_dir}: {exc}") from None
    return result


@dataclass(frozen=True)
class PointSummary:
    mean: float
    se: float
    trees: int


def summarize(rows, metric: str = "mean_saved_fraction") -> dict:
    """Average over trees per ``(family, n, k, e_tau, policy)``.

    The standard error combines the per-tree run-level errors; the trees
    themselves are held fixed.
    """
    se_col = "std_error" if metric == "mean_saved_fraction" else "never_infected_std_error"
    groups: dict = {}
    for row in rows:
        key = (row["family"], row["n"], row["k"], row["e_tau"], row["policy"])
        groups.setdefault(key, []).append((row[metric], row[se_col]))
    out = {}
    for key, vals in groups.items():
        means = [v for v, _ in vals]
        out[key] = PointSummary(
            math.fsum(means) / len(means),
            math.sqrt(math.fsum(s * s for _, s in vals)) / len(vals),
            len(vals),
        )
    return out
