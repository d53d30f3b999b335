"""Monte-Carlo SI spreading with delayed immunization.

One realization draws a single shared delay ``tau`` and one ``Exp(lam)``
transmission delay per edge. A vaccinated node whose infection would arrive
after ``tau`` becomes immune and never transmits, which cuts off its whole
subtree. With no recovery and a finite tree every arrival time follows from
path sums, so no event clock is needed for a single source.

Random streams
--------------
Run ``r`` under master seed ``seed`` uses
``default_rng(SeedSequence(seed, spawn_key=(r,)))`` and draws a single vector
of ``n`` standard exponentials: entry 0 scales to ``tau`` (ignored for a
fixed delay), entry ``j >= 1`` scales to the delay of the edge above node
``bfs_order[j]``. :func:`simulate_once` and the batch estimator read the same
numbers, so they agree realization by realization.

Counting
--------
``saved_by_plan`` counts nodes with a strict ancestor in the immune set; its
mean is the analytic reward. ``never_infected`` also counts the immune
vaccinated nodes that are not below another immune node.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import SourceInPlan
from .prob import DelayModel
from .reward import check_plan
from .tree import RootedTree


@dataclass(frozen=True)
class EpidemicOutcome:
    infection_time: np.ndarray
    immune_set: frozenset
    saved_by_plan: int
    never_infected: int
    tau: float


def run_rng(seed: int, run: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(run),)))


def _tau(m: DelayModel, unit):
    if m.kind == "exponential":
        return unit / m.mu
    return np.full_like(unit, m.t) if isinstance(unit, np.ndarray) else m.t


def _edge_delays(t: RootedTree, units: np.ndarray, lam: float) -> np.ndarray:
    """Per-node delay of the edge above it, indexed by node id (0 for the root)."""
    x = np.zeros(units.shape, dtype=np.float64)
    x[..., t.bfs_order[1:]] = units[..., 1:] / lam
    return x


def _saved_below(t: RootedTree, immune: Iterable[int], never: np.ndarray) -> int:
    covered = np.zeros(t.n, dtype=bool)
    for u in immune:
        covered[t.descendants(u)] = True
    return int(np.count_nonzero(covered & never))


def simulate_once(
    t: RootedTree,
    plan: Iterable[int],
    m: DelayModel,
    rng: np.random.Generator,
    sources: Optional[Iterable[int]] = None,
) -> EpidemicOutcome:
    """One realization.

    With the default single source (the root) arrival times come from one
    top-down pass. Other source sets are handled by an earliest-arrival
    sweep over the undirected tree; ``saved_by_plan`` then still refers to
    ancestry in ``t`` as rooted.
    """
    src = {t.root} if sources is None else {t.check_node(s) for s in sources}
    plan = [t.check_node(u) for u in plan]
    hit = src.intersection(plan)
    if hit:
        raise SourceInPlan(f"sources {sorted(hit)} cannot be vaccinated")
    if len(set(plan)) != len(plan):
        raise ValueError("duplicate nodes in plan")
    units = rng.standard_exponential(t.n)
    tau = float(_tau(m, units[0]))
    x = _edge_delays(t, units, m.lam)
    vacc = np.zeros(t.n, dtype=bool)
    vacc[plan] = True

    if src == {t.root}:
        z = np.zeros(t.n)
        blocked = np.zeros(t.n, dtype=bool)
        for v in t.bfs_order[1:]:
            p = t.parent[v]
            z[v] = z[p] + x[v]
            blocked[v] = blocked[p] or (vacc[p] and z[p] > tau)
        immune_mask = vacc & (z > tau)
        infection = np.where(blocked | immune_mask, np.inf, z)
        immune = frozenset(int(u) for u in np.flatnonzero(immune_mask))
    else:
        infection, immune = _earliest_arrival(t, src, vacc, x, tau)

    never = np.isinf(infection)
    return EpidemicOutcome(
        infection_time=infection,
        immune_set=immune,
        saved_by_plan=_saved_below(t, immune, never),
        never_infected=int(never.sum()),
        tau=tau,
    )


def _earliest_arrival(t, src, vacc, x, tau):
    infection = np.full(t.n, np.inf)
    done = np.zeros(t.n, dtype=bool)
    immune = set()
    heap = [(0.0, s) for s in sorted(src)]
    while heap:
        time, v = heapq.heappop(heap)
        if done[v]:
            continue
        done[v] = True
        if vacc[v] and time > tau:
            immune.add(v)
            continue
        infection[v] = time
        for w in t.children[v]:
            if not done[w]:
                heapq.heappush(heap, (time + x[w], w))
        p = t.parent[v]
        if p >= 0 and not done[p]:
            heapq.heappush(heap, (time + x[v], int(p)))
    return infection, frozenset(immune)


def simulate_forest_once(
    forest: Sequence[RootedTree],
    plan: Iterable[tuple[int, int]],
    m: DelayModel,
    rng: np.random.Generator,
) -> list[EpidemicOutcome]:
    """One realization over disjoint trees sharing one ``tau``.

    ``plan`` holds ``(tree_index, node)`` pairs. The first standard
    exponential gives ``tau``; each tree then takes ``n - 1`` edge draws in
    tree order.
    """
    per_tree: list[list[int]] = [[] for _ in forest]
    for c, u in plan:
        per_tree[c].append(u)
    tau_unit = rng.standard_exponential()
    out = []
    for tr, sub in zip(forest, per_tree):
        units = np.concatenate([[tau_unit], rng.standard_exponential(tr.n - 1)])
        out.append(simulate_once(tr, sub, m, _Replay(units)))
    return out


class _Replay:
    """Feeds pre-drawn exponentials to :func:`simulate_once`."""

    def __init__(self, units):
        self._units = units

    def standard_exponential(self, size):
        assert size == len(self._units)
        return self._units


# ---------------------------------------------------------------------- #
# Batched estimation                                                       #
# ---------------------------------------------------------------------- #


class RunDraws:
    """Standard-exponential draws for runs ``start .. start + runs - 1`` on one tree.

    Everything random about a realization lives here, so one set of draws
    serves any plan and any delay model with the same ``lam``.
    """

    def __init__(self, t: RootedTree, seed: int, runs: int, start: int = 0):
        self.t = t
        self.seed = int(seed)
        self.start = start
        units = np.empty((runs, t.n))
        for r in range(runs):
            units[r] = run_rng(seed, start + r).standard_exponential(t.n)
        self.tau_unit = units[:, 0].copy()
        self._units = units
        self._z: dict[float, np.ndarray] = {}

    @property
    def runs(self) -> int:
        return len(self.tau_unit)

    def arrival(self, lam: float) -> np.ndarray:
        """Unblocked infection times, shape ``(runs, n)``."""
        if lam not in self._z:
            t = self.t
            x = _edge_delays(t, self._units, lam)
            z = np.zeros_like(x)
            for level in t.levels()[1:]:
                z[:, level] = z[:, t.parent[level]] + x[:, level]
            self._z[lam] = z
        return self._z[lam]

    def tau(self, m: DelayModel) -> np.ndarray:
        return _tau(m, self.tau_unit)

    def outcome_counts(self, plan: Sequence[int], m: DelayModel) -> tuple[np.ndarray, np.ndarray]:
        """Per-run ``saved_by_plan`` and ``never_infected``."""
        t = self.t
        plan = np.asarray(check_plan(t, plan), dtype=np.int64)
        if plan.size == 0:
            zeros = np.zeros(self.runs, dtype=np.int64)
            return zeros, zeros.copy()
        z = self.arrival(m.lam)[:, plan]
        immune = z > self.tau(m)[:, None]
        # covers[a, b]: plan[a] is a strict ancestor of plan[b]
        tin, tout = t.tin[plan], t.tout[plan]
        covers = (tin[:, None] < tin[None, :]) & (tin[None, :] <= tout[:, None])
        shadowed = (immune.astype(np.int64) @ covers.astype(np.int64)) > 0
        top = immune & ~shadowed
        saved = top.astype(np.int64) @ t.desc_count[plan]
        never = saved + top.sum(axis=1)
        return saved, never


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=np.float64)
    mean = math.fsum(x) / len(x)
    if len(x) < 2:
        return mean, 0.0
    var = math.fsum((x - mean) ** 2) / (len(x) - 1)
    return mean, math.sqrt(var / len(x))


def _chunks(runs: int, n: int, budget: int = 4_000_000):
    step = max(1, budget // max(n, 1))
    for start in range(0, runs, step):
        yield start, min(step, runs - start)


def simulate_counts(
    t: RootedTree, plan: Sequence[int], m: DelayModel, runs: int, seed: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-run ``saved_by_plan``, ``never_infected`` and ``tau`` for runs ``0..runs-1``."""
    saved, never, taus = [], [], []
    for start, count in _chunks(runs, t.n):
        draws = RunDraws(t, seed, count, start)
        s, nv = draws.outcome_counts(plan, m)
        saved.append(s)
        never.append(nv)
        taus.append(draws.tau(m))
    return np.concatenate(saved), np.concatenate(never), np.concatenate(taus)


def estimate_reward(
    t: RootedTree, plan: Sequence[int], m: DelayModel, runs: int, seed: int
) -> tuple[float, float]:
    """Monte-Carlo mean of ``saved_by_plan`` and its standard error (0 for one run)."""
    if runs < 1:
        raise ValueError(f"runs must be >= 1, got {runs}")
    saved, _, _ = simulate_counts(t, plan, m, runs, seed)
    return _mean_se(saved)


def raw_csv_rows(saved, never, taus) -> list[str]:
    lines = ["run,saved_by_plan,never_infected,tau_sample"]
    lines.extend(f"{r},{int(s)},{int(v)},{float(x)!r}" for r, (s, v, x) in enumerate(zip(saved, never, taus)))
    return lines
