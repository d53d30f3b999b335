"""Choosing which ``k`` nodes to vaccinate.

:func:`greedy_select` adds, one node at a time, the candidate with the
largest marginal gain; the reward is monotone submodular so this reaches at
least ``1 - 1/e`` of the optimum. Ties go to the smallest node id.

The greedy keeps two arrays up to date instead of re-deriving every gain
from scratch: each node's exclusive descendant count with respect to the
current set, and the depth of its deepest selected ancestor. Selecting ``u``
only touches the ancestors of ``u`` up to the nearest selected one and the
subtree of ``u``. Every candidate is still re-scored each round (no lazy
evaluation), so the picks are exactly those of the textbook loop kept in
:func:`naive_greedy_select`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import BudgetExceedsCandidates
from .prob import DelayModel, survival_gap
from .reward import VaccinationPlan, marginal_gain
from .tree import RootedTree

POLICY_NAMES = ("greedy", "top_k_descendants", "top_k_nns", "top_k_frontiers", "top_k_children")


@dataclass(frozen=True)
class PolicyKind:
    """A vaccination policy. ``threshold_layers`` only applies to frontiers;
    ``None`` means ``ceil(lam * E[tau])``."""

    name: str
    threshold_layers: Optional[int] = None

    def __post_init__(self):
        if self.name not in POLICY_NAMES:
            raise ValueError(f"unknown policy {self.name!r}; choose from {', '.join(POLICY_NAMES)}")
        if self.threshold_layers is not None:
            if self.name != "top_k_frontiers":
                raise ValueError(f"{self.name} takes no threshold")
            if self.threshold_layers < 0:
                raise ValueError("threshold_layers must be >= 0")

    @classmethod
    def parse(cls, text: str) -> "PolicyKind":
        """``"greedy"``, ``"top_k_nns"``, ``"top_k_frontiers:3"`` and so on."""
        name, _, thr = text.strip().partition(":")
        return cls(name, int(thr) if thr else None)

    @property
    def label(self) -> str:
        if self.threshold_layers is None:
            return self.name
        return f"{self.name}:{self.threshold_layers}"

    def frontier_threshold(self, m: DelayModel) -> int:
        if self.threshold_layers is not None:
            return self.threshold_layers
        return math.ceil(m.lam * m.expected_tau - 1e-9)


class TreeGreedy:
    """Incremental greedy state for one tree rooted at its source."""

    def __init__(self, t: RootedTree, m: DelayModel):
        self.t = t
        self.m = m
        self.excl = t.desc_count.astype(np.int64)
        # depth of the deepest selected strict ancestor; the root (depth 0,
        # never immune) stands in when there is none
        self.anc_depth = np.zeros(t.n, dtype=np.int64)
        self.available = np.ones(t.n, dtype=bool)
        self.available[t.root] = False
        self.selected: list[int] = []
        self._in_set = np.zeros(t.n, dtype=bool)

    @property
    def n_candidates(self) -> int:
        return int(self.available.sum())

    def gains(self) -> np.ndarray:
        g = self.excl * survival_gap(self.m, self.anc_depth, self.t.depth)
        return np.where(self.available, g, -np.inf)

    def best(self) -> tuple[float, int]:
        """Largest gain and its node (smallest id on ties); ``(-inf, -1)`` if exhausted."""
        if not self.available.any():
            return -math.inf, -1
        g = self.gains()
        u = int(np.argmax(g))
        return float(g[u]), u

    def add(self, u: int) -> None:
        t = self.t
        if not self.available[u]:
            raise ValueError(f"node {u} is not a candidate")
        e_u = self.excl[u]
        w = t.parent[u]
        while w >= 0:
            self.excl[w] -= e_u
            if self._in_set[w]:
                break
            w = t.parent[w]
        below = t.descendants(u)
        self.anc_depth[below] = np.maximum(self.anc_depth[below], t.depth[u])
        self.available[u] = False
        self._in_set[u] = True
        self.selected.append(u)


def _check_budget(k: int, candidates: int) -> None:
    if k < 1:
        raise BudgetExceedsCandidates(f"budget must be at least 1, got {k}")
    if k > candidates:
        raise BudgetExceedsCandidates(f"budget {k} exceeds the {candidates} vaccinable nodes")


def greedy_select(t: RootedTree, k: int, m: DelayModel) -> VaccinationPlan:
    """Greedy plan of ``k`` nodes with the gain recorded at each pick."""
    _check_budget(k, t.n - 1)
    state = TreeGreedy(t, m)
    gains = []
    for _ in range(k):
        g, u = state.best()
        state.add(u)
        gains.append(g)
    return VaccinationPlan(state.selected, gains, meta={"policy": "greedy"})


def naive_greedy_select(t: RootedTree, k: int, m: DelayModel) -> VaccinationPlan:
    """Reference greedy: score every candidate with :func:`marginal_gain`."""
    _check_budget(k, t.n - 1)
    S: list[int] = []
    gains = []
    for _ in range(k):
        best_u, best_g = -1, -math.inf
        for u in range(t.n):
            if u == t.root or u in S:
                continue
            g = marginal_gain(t, S, u, m)
            if g > best_g:
                best_u, best_g = u, g
        S.append(best_u)
        gains.append(best_g)
    return VaccinationPlan(S, gains, meta={"policy": "greedy"})


def forest_greedy(forest: Sequence[RootedTree], k: int, m: DelayModel) -> VaccinationPlan:
    """Greedy over disjoint trees, each rooted at its own source.

    Keeps each tree's best candidate, admits the overall best and re-scores
    only the tree it came from. Ties go to the lower tree index, then the
    smaller node id. Plan nodes are local ids; ``plan.components`` holds the
    tree indices.
    """
    states = [TreeGreedy(t, m) for t in forest]
    return _multi_greedy(states, k, meta={"policy": "greedy", "trees": len(states)})


def _multi_greedy(states: list, k: int, meta: dict) -> VaccinationPlan:
    _check_budget(k, sum(s.n_candidates for s in states))
    best = [s.best() for s in states]
    nodes, gains, comps = [], [], []
    for _ in range(k):
        c = 0
        for i in range(1, len(best)):
            if best[i][0] > best[c][0]:
                c = i
        g, u = best[c]
        states[c].add(u)
        nodes.append(u)
        gains.append(g)
        comps.append(c)
        best[c] = states[c].best()
    return VaccinationPlan(nodes, gains, comps, meta=meta)


# ---------------------------------------------------------------------- #
# Baselines                                                                #
# ---------------------------------------------------------------------- #


def baseline_select(t: RootedTree, k: int, policy: PolicyKind, m: DelayModel) -> VaccinationPlan:
    """Reward-oblivious ranking policies; the root is never selected.

    * ``top_k_descendants``: most descendants first.
    * ``top_k_nns``: shallowest first.
    * ``top_k_children``: most children first.
    * ``top_k_frontiers``: most descendants among nodes at depth >= the
      threshold; if fewer than ``k`` qualify, the rest comes from the layers
      just above the threshold, deepest layer first, each ranked by
      descendants.

    Remaining ties go to the smallest id. Gains are recorded as zeros.
    """
    if policy.name == "greedy":
        return greedy_select(t, k, m)
    _check_budget(k, t.n - 1)
    ids = np.arange(t.n)
    desc = t.desc_count
    if policy.name == "top_k_descendants":
        order = np.lexsort((ids, -desc))
    elif policy.name == "top_k_nns":
        order = np.lexsort((ids, t.depth))
    elif policy.name == "top_k_children":
        nkids = np.fromiter((len(c) for c in t.children), dtype=np.int64, count=t.n)
        order = np.lexsort((ids, -nkids))
    else:
        thr = policy.frontier_threshold(m)
        # qualifying layers all share rank 0, shallower layers rank by distance to the threshold
        layer_rank = np.maximum(thr - t.depth, 0)
        order = np.lexsort((ids, -desc, layer_rank))
    picked = [int(u) for u in order if u != t.root][:k]
    meta = {"policy": policy.label}
    if policy.name == "top_k_frontiers":
        meta["threshold_layers"] = policy.frontier_threshold(m)
    return VaccinationPlan(picked, [0.0] * k, meta=meta)


def select(t: RootedTree, k: int, policy: PolicyKind, m: DelayModel) -> VaccinationPlan:
    """Dispatch on ``policy``."""
    if policy.name == "greedy":
        return greedy_select(t, k, m)
    return baseline_select(t, k, policy, m)
