"""Reducing several infection sources to pieces the greedy can handle.

1. :func:`normalize_root` re-roots the tree at a source.
2. :func:`split_connected_sources` handles sources that form one connected
   block around the root: cutting the source-source edges leaves one tree
   per source, rooted at that source.
3. :func:`decompose_distant_sources` handles the general case. Removing the
   sources splits the healthy nodes into connected groups. A group that
   touches a single source joins that source's tree; a group touching two
   or more sources becomes a *residual* fragment (the group plus those
   sources), scored with :func:`~delayvax.reward.multisource_reward`.

:func:`plan_multisource` runs one greedy loop over all resulting pieces.

Pieces use local node ids ``0..m-1`` assigned in increasing order of the
original ids, so the smallest-id tie-break means the same thing locally and
globally. ``Component.ids`` maps back.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .errors import RootNotSource, SourceInPlan, SourcesNotConnected
from .planner import TreeGreedy, _multi_greedy
from .prob import DelayModel
from .reward import VaccinationPlan, expected_reward, multisource_reward
from .tree import RootedTree, from_edges, reroot


@dataclass(frozen=True)
class MultiSourceInstance:
    """A tree with a set of initially infected nodes.

    ``ids`` maps local ids to the ids of the tree this instance was cut from
    (identity when ``None``).
    """

    tree: RootedTree
    sources: frozenset
    ids: Optional[tuple] = None

    def __post_init__(self):
        src = frozenset(self.tree.check_node(s) for s in self.sources)
        if not src:
            raise ValueError("need at least one source")
        object.__setattr__(self, "sources", src)

    @property
    def healthy(self) -> list[int]:
        return [v for v in range(self.tree.n) if v not in self.sources]

    def global_id(self, v: int) -> int:
        return v if self.ids is None else self.ids[v]


@dataclass(frozen=True)
class Component:
    """One piece of a decomposition.

    ``source_trees`` holds the fragment rooted at each of its sources (one
    tree for a single-source piece, whose root is the source).
    """

    tree: RootedTree
    sources: tuple
    ids: tuple
    source_trees: tuple

    @property
    def role(self) -> str:
        return "single" if len(self.sources) == 1 else "residual"

    @property
    def healthy(self) -> list[int]:
        return [v for v in range(self.tree.n) if v not in self.sources]

    def depths(self) -> dict[int, np.ndarray]:
        """Edge distance from each source (by original id) to every local node."""
        return {self.ids[s]: tr.depth for s, tr in zip(self.sources, self.source_trees)}

    def reward(self, S_local: Iterable[int], m: DelayModel) -> float:
        S_local = list(S_local)
        if self.role == "single":
            return expected_reward(self.tree, S_local, m)
        return multisource_reward(self.source_trees, S_local, m)


@dataclass
class Decomposition:
    single_source_trees: list = field(default_factory=list)
    residual_trees: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def components(self) -> list[Component]:
        return [*self.single_source_trees, *self.residual_trees]

    def to_report(self) -> str:
        comps = []
        for idx, c in enumerate(self.components):
            comps.append({
                "index": idx,
                "role": c.role,
                "sources": [c.ids[s] for s in c.sources],
                "nodes": c.tree.n,
                "healthy_nodes": len(c.healthy),
            })
        return json.dumps({"components": comps, "notes": self.notes}, indent=2) + "\n"


def _component(tree: RootedTree, nodes: Iterable[int], sources: list[int], root: int) -> Component:
    """Cut ``nodes`` (connected, original ids) out of ``tree``."""
    ids = tuple(sorted(int(v) for v in nodes))
    local = {v: i for i, v in enumerate(ids)}
    edges = [(local[c], local[p]) for c in ids if (p := int(tree.parent[c])) in local]
    frag = from_edges(len(ids), edges, root=local[root])
    srcs = tuple(local[s] for s in sources)
    trees = tuple(frag if s == frag.root else reroot(frag, s) for s in srcs)
    return Component(frag, srcs, ids, trees)


def _source_order(tree: RootedTree, sources) -> list[int]:
    return sorted(sources, key=lambda s: (int(tree.depth[s]), s))


def normalize_root(inst: MultiSourceInstance) -> MultiSourceInstance:
    """Re-root at the smallest-id source unless the root already is a source."""
    if inst.tree.root in inst.sources:
        return inst
    return MultiSourceInstance(reroot(inst.tree, min(inst.sources)), inst.sources, inst.ids)


def sources_connected(inst: MultiSourceInstance) -> bool:
    t = inst.tree
    if t.root not in inst.sources:
        return False
    return all(t.parent[s] in inst.sources for s in inst.sources if s != t.root)


def _healthy_branches(t: RootedTree, s: int, sources) -> list[int]:
    nodes = [s]
    for c in t.children[s]:
        if c not in sources:
            nodes.extend(int(v) for v in t.subtree(c))
    return nodes


def split_connected_sources(inst: MultiSourceInstance) -> list[MultiSourceInstance]:
    """One single-source instance per source that borders healthy nodes.

    Sources are visited by depth, then id. Sources with no healthy neighbour
    below them produce nothing.
    """
    t = inst.tree
    if t.root not in inst.sources:
        raise RootNotSource(f"root {t.root} is not a source; normalize the instance first")
    if not sources_connected(inst):
        stray = sorted(s for s in inst.sources if s != t.root and t.parent[s] not in inst.sources)
        raise SourcesNotConnected(f"sources {stray} are cut off from the root's infected block")
    out = []
    for s in _source_order(t, inst.sources):
        nodes = _healthy_branches(t, s, inst.sources)
        if len(nodes) == 1:
            continue
        comp = _component(t, nodes, [s], s)
        ids = tuple(inst.global_id(v) for v in comp.ids)
        out.append(MultiSourceInstance(comp.tree, frozenset([comp.tree.root]), ids))
    return out


def decompose_distant_sources(inst: MultiSourceInstance) -> Decomposition:
    """Split healthy nodes by which sources can reach them without crossing another source."""
    t = inst.tree
    src = inst.sources
    if t.root not in src:
        raise RootNotSource(f"root {t.root} is not a source; normalize the instance first")

    group = np.full(t.n, -1, dtype=np.int64)
    tops: list[int] = []
    for v in t.preorder:
        if v in src:
            continue
        p = t.parent[v]
        if p in src:
            group[v] = len(tops)
            tops.append(int(v))
        else:
            group[v] = group[p]
    members: list[list[int]] = [[] for _ in tops]
    borders: list[set] = [{int(t.parent[top])} for top in tops]
    for v in range(t.n):
        if group[v] >= 0:
            members[group[v]].append(v)
    for s in src:
        p = t.parent[s]
        if p >= 0 and group[p] >= 0:
            borders[group[p]].add(s)

    dec = Decomposition()
    own: dict[int, list[int]] = {}
    residual_groups = []
    for g, top in enumerate(tops):
        if len(borders[g]) == 1:
            own.setdefault(int(t.parent[top]), []).extend(members[g])
        else:
            residual_groups.append(g)

    for s in _source_order(t, src):
        if s in own:
            dec.single_source_trees.append(_component(t, [s, *own[s]], [s], s))

    residual_groups.sort(key=lambda g: (int(t.depth[t.parent[tops[g]]]), tops[g]))
    for g in residual_groups:
        upstream = int(t.parent[tops[g]])
        srcs = _source_order(t, borders[g])
        comp = _component(t, [*members[g], *srcs], srcs, upstream)
        dec.residual_trees.append(comp)
        if len(srcs) >= 3:
            dec.notes.append(
                f"residual {len(dec.residual_trees) - 1} is reachable from {len(srcs)} sources"
            )

    if inst.ids is not None:
        dec = _relabel(dec, inst.ids)
    return dec


def _relabel(dec: Decomposition, ids) -> Decomposition:
    def fix(c: Component) -> Component:
        return Component(c.tree, c.sources, tuple(ids[v] for v in c.ids), c.source_trees)
    return Decomposition([fix(c) for c in dec.single_source_trees],
                         [fix(c) for c in dec.residual_trees], dec.notes)


def decompose(inst: MultiSourceInstance) -> Decomposition:
    """Normalize, then split or decompose as appropriate."""
    inst = normalize_root(inst)
    if sources_connected(inst):
        dec = Decomposition()
        for piece in split_connected_sources(inst):
            tr = piece.tree
            dec.single_source_trees.append(Component(tr, (tr.root,), piece.ids, (tr,)))
        return dec
    return decompose_distant_sources(inst)


class ResidualGreedy:
    """Greedy state for a residual fragment; gains are reward differences."""

    def __init__(self, comp: Component, m: DelayModel):
        self.comp = comp
        self.m = m
        self.available = np.ones(comp.tree.n, dtype=bool)
        self.available[list(comp.sources)] = False
        self.selected: list[int] = []
        self.value = 0.0

    @property
    def n_candidates(self) -> int:
        return int(self.available.sum())

    def best(self) -> tuple[float, int]:
        best_g, best_u = -math.inf, -1
        for u in np.flatnonzero(self.available):
            g = multisource_reward(self.comp.source_trees, [*self.selected, int(u)], self.m) - self.value
            if g > best_g:
                best_g, best_u = g, int(u)
        return best_g, best_u

    def add(self, u: int) -> None:
        self.available[u] = False
        self.selected.append(u)
        self.value = multisource_reward(self.comp.source_trees, self.selected, self.m)


def plan_multisource(inst: MultiSourceInstance, k: int, m: DelayModel) -> VaccinationPlan:
    """Greedy plan of ``k`` nodes across every piece of the decomposition.

    Returned node ids are those of ``inst``; ``plan.components`` indexes
    ``decompose(inst).components``. Plans touching a residual piece carry
    ``meta["heuristic"] = True``: no approximation guarantee is known there.
    """
    dec = decompose(inst)
    comps = dec.components
    states = [TreeGreedy(c.tree, m) if c.role == "single" else ResidualGreedy(c, m) for c in comps]
    meta = {"policy": "greedy", "components": len(comps), "heuristic": False, "notes": list(dec.notes)}
    plan = _multi_greedy(states, k, meta)
    plan.meta["heuristic"] = any(comps[c].role == "residual" for c in plan.components)
    global_nodes = [comps[c].ids[u] for c, u in zip(plan.components, plan.nodes)]
    return VaccinationPlan(global_nodes, plan.gains, plan.components, plan.meta)


def composite_reward(dec: Decomposition, S: Iterable[int], m: DelayModel) -> float:
    """Sum of each piece's objective over the members of ``S`` (original ids) it holds."""
    S = set(int(s) for s in S)
    total = 0.0
    for c in dec.components:
        local = [i for i, g in enumerate(c.ids) if g in S and i not in c.sources]
        hit_sources = [c.ids[i] for i in c.sources if c.ids[i] in S]
        if hit_sources:
            raise SourceInPlan(f"sources {hit_sources} cannot be vaccinated")
        total += c.reward(local, m)
    return total
