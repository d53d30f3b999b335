"""Expected number of saved nodes for a vaccination set, and marginal gains.

For a single source at the root and a vaccination set ``S``::

    r(S) = sum_{i in S} (n_i - |U_{j in N_i & S} N_j|) * P{Z_i > tau}

``N_i`` are the strict descendants of ``i`` and ``n_i = |N_i|``. The
coefficient is the *exclusive* descendant count of ``i``: the descendants not
already covered by a vaccinated node lower in ``i``'s subtree. Those covering
nodes themselves still count towards ``i``.

Adding ``u`` to ``S`` changes the reward by::

    gain(S, u) = excl_u * (P{Z_u > tau} - P{Z_v > tau})

where ``v`` is the deepest strict ancestor of ``u`` in ``S`` (the second
factor is just ``P{Z_u > tau}`` when there is none).
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import AlreadySelected, InconsistentUniverse, NotInSet, SourceInPlan
from .prob import DelayModel, survival_gap, survival_prob
from .tree import RootedTree, deepest_ancestor_in


@dataclass
class VaccinationPlan:
    """Vaccinated nodes in selection order with the gain recorded at each pick.

    ``components`` is set for plans spanning several trees (forest or
    multi-source plans): ``components[r]`` is the index of the tree that
    ``nodes[r]`` belongs to.
    """

    nodes: list[int]
    gains: list[float]
    components: Optional[list[int]] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.nodes) != len(self.gains):
            raise ValueError("nodes and gains must have equal length")
        keys = self.keys()
        if len(set(keys)) != len(keys):
            raise ValueError(f"plan contains duplicate nodes: {keys}")

    def __len__(self) -> int:
        return len(self.nodes)

    def keys(self) -> list:
        if self.components is None:
            return list(self.nodes)
        return list(zip(self.components, self.nodes))

    @property
    def node_set(self) -> frozenset:
        return frozenset(self.keys())

    @property
    def total_gain(self) -> float:
        return float(sum(self.gains))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.components is None:
            w.writerow(["rank", "node_id", "marginal_gain"])
            for r, (u, g) in enumerate(zip(self.nodes, self.gains), start=1):
                w.writerow([r, u, repr(float(g))])
        else:
            w.writerow(["rank", "node_id", "marginal_gain", "component"])
            for r, (u, g, c) in enumerate(zip(self.nodes, self.gains, self.components), start=1):
                w.writerow([r, u, repr(float(g)), c])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "VaccinationPlan":
        rows = list(csv.DictReader(io.StringIO(text)))
        rows.sort(key=lambda r: int(r["rank"]))
        nodes = [int(r["node_id"]) for r in rows]
        gains = [float(r.get("marginal_gain") or 0.0) for r in rows]
        comps = None
        if rows and "component" in rows[0]:
            comps = [int(r["component"]) for r in rows]
        return cls(nodes, gains, comps)


def check_plan(t: RootedTree, S: Iterable[int]) -> list[int]:
    """Validate ids; reject the root (the infection source) and duplicates."""
    out = [t.check_node(s) for s in S]
    if t.root in out:
        raise SourceInPlan(f"node {t.root} is the infection source and cannot be vaccinated")
    if len(set(out)) != len(out):
        raise ValueError(f"duplicate nodes in plan: {out}")
    return out


def exclusive_counts(t: RootedTree, S: Iterable[int]) -> dict[int, int]:
    """Exclusive descendant count of every member of ``S``.

    Members are scanned in preorder with a stack of open subtrees; each
    member is charged to its nearest member-ancestor, which loses that
    member's descendants (but not the member itself).
    """
    members = sorted({t.check_node(s) for s in S}, key=lambda s: t.tin[s])
    counts = {s: int(t.desc_count[s]) for s in members}
    stack: list[int] = []
    for j in members:
        while stack and t.tout[stack[-1]] < t.tin[j]:
            stack.pop()
        if stack:
            counts[stack[-1]] -= int(t.desc_count[j])
        stack.append(j)
    return counts


def exclusive_desc_count(t: RootedTree, S: Iterable[int], i: int) -> int:
    """``n_i - |U_{j in N_i & S} N_j|`` for a member ``i`` of ``S``."""
    S = set(S)
    if i not in S:
        raise NotInSet(f"node {i} is not in the set")
    t.check_node(i)
    inside = [j for j in S if t.tin[i] < t.tin[t.check_node(j)] <= t.tout[i]]
    return exclusive_counts(t, [i, *inside])[i]


def expected_reward(t: RootedTree, S: Iterable[int], m: DelayModel) -> float:
    """Expected number of nodes saved by vaccinating ``S``."""
    S = check_plan(t, S)
    if not S:
        return 0.0
    counts = exclusive_counts(t, S)
    nodes = np.fromiter(counts.keys(), dtype=np.int64, count=len(counts))
    excl = np.fromiter(counts.values(), dtype=np.float64, count=len(counts))
    return float(np.dot(excl, survival_prob(m, t.depth[nodes])))


def marginal_gain(t: RootedTree, S: Iterable[int], u: int, m: DelayModel) -> float:
    """``r(S + {u}) - r(S)`` via the closed form."""
    S = check_plan(t, S)
    u = t.check_node(u)
    if u == t.root:
        raise SourceInPlan(f"node {u} is the infection source and cannot be vaccinated")
    if u in S:
        raise AlreadySelected(f"node {u} is already in the plan")
    excl = exclusive_counts(t, [u, *S])[u]
    v = deepest_ancestor_in(t, u, S)
    shallow = 0 if v is None else int(t.depth[v])
    return excl * survival_gap(m, shallow, int(t.depth[u]))


# ---------------------------------------------------------------------- #
# Several sources sharing one fragment                                     #
# ---------------------------------------------------------------------- #


def _check_universe(trees: Sequence[RootedTree]) -> int:
    if not trees:
        raise InconsistentUniverse("need at least one source tree")
    n = trees[0].n
    for tr in trees[1:]:
        if tr.n != n:
            raise InconsistentUniverse(f"source trees disagree on node count ({n} vs {tr.n})")
    edges = {frozenset(e) for e in trees[0].edges()}
    for tr in trees[1:]:
        if {frozenset(e) for e in tr.edges()} != edges:
            raise InconsistentUniverse("source trees are not orientations of the same tree")
    return n


def _shared_descendants(trees: Sequence[RootedTree], i: int) -> np.ndarray:
    mask = np.ones(trees[0].n, dtype=bool)
    for tr in trees:
        mask &= (tr.tin > tr.tin[i]) & (tr.tin <= tr.tout[i])
    return mask


def multisource_reward(trees: Sequence[RootedTree], S: Iterable[int], m: DelayModel) -> float:
    """Heuristic reward for a fragment infected from several sources.

    ``trees[s]`` is the fragment rooted at its ``s``-th source; all share
    one node-id universe. With ``N'_i`` the nodes below ``i`` from every
    source's point of view::

        r'(S) = sum_{i in S} |N'_i - U_{j in N'_i & S} N'_j| * prod_s P{Z^s_i > tau}

    The per-source probabilities are multiplied as if the sources spread
    independently, which is an approximation: ``tau`` is shared.
    """
    n = _check_universe(trees)
    roots = {tr.root for tr in trees}
    S = [trees[0].check_node(s) for s in S]
    bad = roots.intersection(S)
    if bad:
        raise SourceInPlan(f"sources {sorted(bad)} cannot be vaccinated")
    if not S:
        return 0.0
    shared = {i: _shared_descendants(trees, i) for i in S}
    total = 0.0
    for i in S:
        covered = np.zeros(n, dtype=bool)
        for j in S:
            if j != i and shared[i][j]:
                covered |= shared[j]
        count = int(np.count_nonzero(shared[i] & ~covered))
        if count:
            prob = 1.0
            for tr in trees:
                prob *= survival_prob(m, int(tr.depth[i]))
            total += count * prob
    return total
