"""Brute-force references for small trees.

Descendant sets are materialized by walking parent pointers and the reward
is evaluated straight from its set definition, sharing no code with
:mod:`delayvax.reward` beyond the survival kernel.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterable

from .errors import SearchSpaceTooLarge, SourceInPlan
from .prob import DelayModel, survival_prob
from .tree import RootedTree

DEFAULT_CAP = 10_000_000


@dataclass(frozen=True)
class OracleResult:
    best_set: tuple
    best_value: float
    evaluated: int


def descendant_sets(t: RootedTree) -> list[frozenset]:
    sets: list[set] = [set() for _ in range(t.n)]
    for v in range(t.n):
        p = int(t.parent[v])
        while p >= 0:
            sets[p].add(v)
            p = int(t.parent[p])
    return [frozenset(s) for s in sets]


def walk_depths(t: RootedTree) -> list[int]:
    out = []
    for v in range(t.n):
        d, p = 0, int(t.parent[v])
        while p >= 0:
            d, p = d + 1, int(t.parent[p])
        out.append(d)
    return out


class _SetEvaluator:
    def __init__(self, t: RootedTree, m: DelayModel):
        self.root = t.root
        self.desc = descendant_sets(t)
        self.prob = [survival_prob(m, d) for d in walk_depths(t)]

    def __call__(self, S) -> float:
        if self.root in S:
            raise SourceInPlan(f"node {self.root} is the infection source")
        total = 0.0
        for i in S:
            covered = set()
            for j in S:
                if j in self.desc[i]:
                    covered |= self.desc[j]
            total += len(self.desc[i] - covered) * self.prob[i]
        return total


def exhaustive_reward_check(t: RootedTree, S: Iterable[int], m: DelayModel) -> float:
    """The reward evaluated by literal set construction."""
    return _SetEvaluator(t, m)([t.check_node(s) for s in S])


def exhaustive_optimum(t: RootedTree, k: int, m: DelayModel, cap: int = DEFAULT_CAP) -> OracleResult:
    """Best ``k``-subset of non-root nodes; ties go to the lexicographically smallest set."""
    candidates = [v for v in range(t.n) if v != t.root]
    if not 1 <= k <= len(candidates):
        raise ValueError(f"k must be in 1..{len(candidates)}, got {k}")
    total = math.comb(len(candidates), k)
    if total > cap:
        raise SearchSpaceTooLarge(f"C({len(candidates)}, {k}) = {total} subsets exceeds the cap of {cap}")
    value = _SetEvaluator(t, m)
    best_set, best_value, seen = None, -math.inf, 0
    for S in itertools.combinations(candidates, k):
        seen += 1
        r = value(S)
        if r > best_value:
            best_set, best_value = S, r
    return OracleResult(best_set, best_value, seen)


def bfs_distances(n: int, edges: Iterable[tuple[int, int]], start: int) -> list[int]:
    """Edge distances from ``start`` in an undirected graph (-1 if unreachable)."""
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    dist = [-1] * n
    dist[start] = 0
    queue = [start]
    for v in queue:
        for w in adj[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def brute_multisource_reward(
    n: int, edges: Iterable[tuple[int, int]], sources: Iterable[int], S: Iterable[int], m: DelayModel
) -> float:
    """Multi-source heuristic reward from path arithmetic on an undirected tree.

    ``j`` lies below ``i`` as seen from source ``s`` exactly when
    ``dist(s, j) = dist(s, i) + dist(i, j)`` and ``j != i``.
    """
    edges = list(edges)
    sources = list(sources)
    S = list(S)
    if set(S) & set(sources):
        raise SourceInPlan("sources cannot be vaccinated")
    dist = {v: bfs_distances(n, edges, v) for v in set(sources) | set(S)}

    def below(i: int) -> set:
        return {j for j in range(n) if j != i
                and all(dist[s][j] == dist[s][i] + dist[i][j] for s in sources)}

    shared = {i: below(i) for i in S}
    total = 0.0
    for i in S:
        covered = set()
        for j in S:
            if j in shared[i]:
                covered |= shared[j]
        prob = math.prod(survival_prob(m, dist[s][i]) for s in sources)
        total += len(shared[i] - covered) * prob
    return total
