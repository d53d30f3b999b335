"""Rooted trees stored as flat numpy arrays.

A :class:`RootedTree` is immutable once built. Besides parent/children it
carries per-node depth, descendant count and a preorder (Euler) interval, so
strict-ancestor tests are O(1):

    ``a`` is a strict ancestor of ``b``  <=>  ``tin[a] < tin[b] <= tout[a]``

where ``tin`` is the preorder index and ``tout = tin + desc_count``.

Node ids are dense integers ``0 .. n-1``. Generated trees number their nodes
in breadth-first order, so the root is 0 and parents always precede children.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    CycleDetected,
    DisconnectedNode,
    GenerationBudgetExceeded,
    InvalidNodeId,
    InvalidTree,
    MultipleRoots,
)

DEFAULT_MAX_RESTARTS = 1_000_000


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class RootedTree:
    """Immutable rooted tree.

    Attributes
    ----------
    n : int
        Number of nodes.
    root : int
        Root id.
    parent : int64[n]
        Parent id, ``-1`` for the root.
    children : tuple[tuple[int, ...], ...]
        Children of each node in increasing id order.
    depth : int64[n]
        Edge distance from the root.
    desc_count : int64[n]
        Number of strict descendants.
    tin, tout : int64[n]
        Preorder interval; the subtree of ``i`` occupies
        ``preorder[tin[i] : tout[i] + 1]``.
    preorder, bfs_order : int64[n]
        Node ids in DFS preorder (children visited by id) and BFS order.
    """

    __slots__ = (
        "n", "root", "parent", "children", "depth", "desc_count",
        "tin", "tout", "preorder", "bfs_order", "_levels",
    )

    def __init__(self, parent: np.ndarray, root: int, children: tuple, preorder: list[int]):
        n = len(parent)
        self.n = n
        self.root = int(root)
        self.parent = _frozen(np.asarray(parent, dtype=np.int64))
        self.children = children

        order = np.asarray(preorder, dtype=np.int64)
        tin = np.empty(n, dtype=np.int64)
        tin[order] = np.arange(n)
        depth = np.zeros(n, dtype=np.int64)
        for v in order[1:]:
            depth[v] = depth[self.parent[v]] + 1
        desc = np.zeros(n, dtype=np.int64)
        for v in order[::-1]:
            p = self.parent[v]
            if p >= 0:
                desc[p] += desc[v] + 1

        bfs = [self.root]
        for v in bfs:
            bfs.extend(children[v])

        self.preorder = _frozen(order)
        self.tin = _frozen(tin)
        self.tout = _frozen(tin + desc)
        self.depth = _frozen(depth)
        self.desc_count = _frozen(desc)
        self.bfs_order = _frozen(np.asarray(bfs, dtype=np.int64))
        self._levels = None

    # ------------------------------------------------------------------ #
    # Queries                                                              #
    # ------------------------------------------------------------------ #

    def __len__(self) -> int:
        return self.n

    def __repr__(self) -> str:
        return f"RootedTree(n={self.n}, root={self.root}, height={self.height})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, RootedTree):
            return NotImplemented
        return self.root == other.root and np.array_equal(self.parent, other.parent)

    def __hash__(self) -> int:
        return hash((self.root, self.parent.tobytes()))

    @property
    def height(self) -> int:
        return int(self.depth.max())

    def check_node(self, i) -> int:
        if isinstance(i, (bool, np.bool_)) or not isinstance(i, (int, np.integer)):
            raise InvalidNodeId(f"node id must be an integer, got {i!r}")
        if not 0 <= i < self.n:
            raise InvalidNodeId(f"node id {i} out of range for tree of {self.n} nodes")
        return int(i)

    def is_ancestor(self, a: int, b: int) -> bool:
        """True iff ``a`` is a strict ancestor of ``b``."""
        a = self.check_node(a)
        b = self.check_node(b)
        return bool(self.tin[a] < self.tin[b] <= self.tout[a])

    def descendants(self, i: int) -> np.ndarray:
        """Strict descendants of ``i`` (preorder)."""
        i = self.check_node(i)
        return self.preorder[self.tin[i] + 1: self.tout[i] + 1]

    def subtree(self, i: int) -> np.ndarray:
        """``i`` followed by its strict descendants (preorder)."""
        i = self.check_node(i)
        return self.preorder[self.tin[i]: self.tout[i] + 1]

    def ancestors(self, i: int) -> list[int]:
        """Strict ancestors of ``i`` from the parent upwards."""
        i = self.check_node(i)
        out = []
        p = self.parent[i]
        while p >= 0:
            out.append(int(p))
            p = self.parent[p]
        return out

    def neighbors(self, i: int) -> list[int]:
        i = self.check_node(i)
        nb = list(self.children[i])
        if self.parent[i] >= 0:
            nb.append(int(self.parent[i]))
        return nb

    def edges(self) -> list[tuple[int, int]]:
        """``(child, parent)`` pairs in child-id order."""
        return [(v, int(p)) for v, p in enumerate(self.parent) if p >= 0]

    def levels(self) -> list[np.ndarray]:
        """Node ids grouped by depth; ``levels()[d]`` holds depth-``d`` nodes."""
        if self._levels is None:
            order = self.bfs_order
            d = self.depth[order]
            cuts = np.flatnonzero(np.diff(d)) + 1
            self._levels = [_frozen(x.copy()) for x in np.split(order, cuts)]
        return self._levels

    def parent_list(self) -> list[Optional[int]]:
        return [None if p < 0 else int(p) for p in self.parent]

    # ------------------------------------------------------------------ #
    # Serialization                                                        #
    # ------------------------------------------------------------------ #

    def to_text(self) -> str:
        """Header ``n root`` then one ``child parent`` line per edge."""
        lines = [f"{self.n} {self.root}"]
        lines.extend(f"{c} {p}" for c, p in self.edges())
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RootedTree":
        rows = [ln.split() for ln in text.splitlines()]
        rows = [r for r in rows if r and not r[0].startswith("#")]
        if not rows or len(rows[0]) != 2:
            raise InvalidTree("tree text must start with a header line 'n root_id'")
        try:
            n, root = int(rows[0][0]), int(rows[0][1])
            edges = [(int(a), int(b)) for a, b in rows[1:]]
        except ValueError as exc:
            raise InvalidTree(f"malformed tree text: {exc}") from None
        if n < 1:
            raise InvalidTree(f"tree must have at least one node, header says {n}")
        if not 0 <= root < n:
            raise InvalidNodeId(f"root id {root} out of range for {n} nodes")
        parents: list[Optional[int]] = [None] * n
        seen = {root}
        for c, p in edges:
            for x in (c, p):
                if not 0 <= x < n:
                    raise InvalidNodeId(f"node id {x} out of range for {n} nodes")
            if c in seen:
                if c == root:
                    raise MultipleRoots(f"root {root} is given a parent ({p})")
                raise InvalidTree(f"node {c} has more than one parent line")
            seen.add(c)
            parents[c] = p
        missing = sorted(set(range(n)) - seen)
        if missing:
            raise DisconnectedNode(f"nodes without a parent edge: {missing[:20]}")
        return build_from_parent_list(parents)

    @classmethod
    def load(cls, path) -> "RootedTree":
        with open(path) as fh:
            return cls.from_text(fh.read())

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())


# ---------------------------------------------------------------------- #
# Construction                                                             #
# ---------------------------------------------------------------------- #


def build_from_parent_list(parents: Sequence[Optional[int]]) -> RootedTree:
    """Build a tree from a parent list; ``None`` (or a negative id) marks the root.

    Raises
    ------
    MultipleRoots
        More than one entry is absent.
    CycleDetected
        No root, or some parent chains never reach the root.
    InvalidNodeId
        A parent reference is out of range.
    """
    n = len(parents)
    if n == 0:
        raise InvalidTree("a tree needs at least one node")
    par = np.empty(n, dtype=np.int64)
    roots = []
    for i, p in enumerate(parents):
        if p is None or p < 0:
            par[i] = -1
            roots.append(i)
            continue
        if not 0 <= p < n:
            raise InvalidNodeId(f"node {i} references parent {p}, outside 0..{n - 1}")
        par[i] = p
    if len(roots) > 1:
        raise MultipleRoots(f"found {len(roots)} roots: {roots[:20]}")

    kids: list[list[int]] = [[] for _ in range(n)]
    for i in range(n):
        if par[i] >= 0:
            kids[par[i]].append(i)

    if not roots:
        raise CycleDetected(f"no root; cycle through {_find_cycle(par, range(n))}")
    root = roots[0]

    preorder = []
    stack = [root]
    while stack:
        v = stack.pop()
        preorder.append(v)
        stack.extend(reversed(kids[v]))
    if len(preorder) != n:
        reached = np.zeros(n, dtype=bool)
        reached[preorder] = True
        stray = np.flatnonzero(~reached).tolist()
        raise CycleDetected(f"parent chains never reach the root; cycle through {_find_cycle(par, stray)}")

    return RootedTree(par, root, tuple(tuple(k) for k in kids), preorder)


def _find_cycle(par: np.ndarray, start_nodes: Iterable[int]) -> list[int]:
    start = next(iter(start_nodes))
    seen: dict[int, int] = {}
    path = []
    v = start
    while v not in seen:
        seen[v] = len(path)
        path.append(int(v))
        v = int(par[v])
    return path[seen[v]:]


def from_edges(n: int, edges: Iterable[tuple[int, int]], root: int = 0) -> RootedTree:
    """Root an undirected edge list at ``root``."""
    adj: list[list[int]] = [[] for _ in range(n)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    return _orient(adj, root)


def _orient(adj: list[list[int]], root: int) -> RootedTree:
    n = len(adj)
    parents: list[Optional[int]] = [None] * n
    seen = np.zeros(n, dtype=bool)
    seen[root] = True
    queue = deque([root])
    while queue:
        v = queue.popleft()
        for w in adj[v]:
            if seen[w]:
                if w != parents[v]:
                    raise CycleDetected(f"edge {v}-{w} closes a cycle")
                continue
            seen[w] = True
            parents[w] = v
            queue.append(w)
    if not seen.all():
        raise DisconnectedNode(f"nodes unreachable from {root}: {np.flatnonzero(~seen)[:20].tolist()}")
    return build_from_parent_list(parents)


def reroot(t: RootedTree, new_root: int) -> RootedTree:
    """Same undirected tree, edges re-oriented away from ``new_root``."""
    new_root = t.check_node(new_root)
    if new_root == t.root:
        return t
    adj = [t.neighbors(i) for i in range(t.n)]
    return _orient(adj, new_root)


def deepest_ancestor_in(t: RootedTree, u: int, S: Iterable[int]) -> Optional[int]:
    """Deepest member of ``S`` that is a strict ancestor of ``u``, else None.

    The strict ancestors of ``u`` form a chain, so the answer is unique.
    """
    u = t.check_node(u)
    best = None
    best_depth = -1
    for s in S:
        s = t.check_node(s)
        if t.tin[s] < t.tin[u] <= t.tout[s] and t.depth[s] > best_depth:
            best, best_depth = s, int(t.depth[s])
    return best


# ---------------------------------------------------------------------- #
# Galton-Watson trees                                                      #
# ---------------------------------------------------------------------- #

BINARY_PAPER_PMF = (1 / 6, 1 / 6, 4 / 6)


@dataclass(frozen=True)
class OffspringDistribution:
    """Child-count law for Galton-Watson growth.

    ``kind`` is ``"poisson"`` (any positive mean), ``"discrete_uniform"``
    (integer mean ``m``, support ``{0, ..., 2m}``) or ``"binary_paper"``
    (pmf 1/6, 1/6, 4/6 on 0, 1, 2; mean 1.5).
    """

    kind: str
    mean: float = 1.5

    def __post_init__(self):
        if self.kind == "poisson":
            if not self.mean > 0:
                raise ValueError(f"poisson mean must be positive, got {self.mean}")
        elif self.kind == "discrete_uniform":
            if self.mean != int(self.mean) or self.mean < 1:
                raise ValueError(f"discrete_uniform mean must be a positive integer, got {self.mean}")
        elif self.kind == "binary_paper":
            object.__setattr__(self, "mean", 1.5)
        else:
            raise ValueError(f"unknown offspring distribution {self.kind!r}")

    @classmethod
    def binary(cls) -> "OffspringDistribution":
        return cls("binary_paper")

    @classmethod
    def parse(cls, text: str) -> "OffspringDistribution":
        """``"binary_paper"``, ``"poisson:3"`` or ``"discrete_uniform:3"``."""
        kind, _, mean = text.partition(":")
        kind = {"uniform": "discrete_uniform", "binary": "binary_paper"}.get(kind, kind)
        if kind == "binary_paper":
            return cls.binary()
        if not mean:
            raise ValueError(f"offspring distribution {text!r} needs a mean, e.g. {kind}:3")
        return cls(kind, float(mean))

    @property
    def label(self) -> str:
        if self.kind == "binary_paper":
            return "binary_paper"
        m = int(self.mean) if float(self.mean).is_integer() else self.mean
        return f"{self.kind}:{m}"

    def pmf(self, k: int) -> float:
        if self.kind == "binary_paper":
            return BINARY_PAPER_PMF[k] if 0 <= k <= 2 else 0.0
        if self.kind == "discrete_uniform":
            m = int(self.mean)
            return 1.0 / (2 * m + 1) if 0 <= k <= 2 * m else 0.0
        from math import exp, lgamma, log
        return exp(k * log(self.mean) - self.mean - lgamma(k + 1)) if k >= 0 else 0.0

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == "poisson":
            return rng.poisson(self.mean, size=size)
        if self.kind == "discrete_uniform":
            return rng.integers(0, 2 * int(self.mean) + 1, size=size)
        return rng.choice(3, size=size, p=BINARY_PAPER_PMF)


def sample_galton_watson(
    dist: OffspringDistribution,
    target_size: int,
    rng: np.random.Generator,
    max_restarts: int = DEFAULT_MAX_RESTARTS,
    block: int = 1024,
) -> RootedTree:
    """Grow a Galton-Watson tree breadth-first until it has ``target_size`` nodes.

    Each processed node draws an independent child count. Growth stops the
    moment the size is reached, truncating the current node's children; the
    nodes still queued become leaves. An attempt that dies out early is
    discarded and the process restarts. Child counts are drawn in blocks of
    ``block`` from ``rng``, so the result is a deterministic function of the
    generator state.
    """
    if target_size < 1:
        raise ValueError(f"target_size must be >= 1, got {target_size}")
    if target_size == 1:
        return build_from_parent_list([None])

    buf = dist.draw(rng, block)
    pos = 0
    for _ in range(max_restarts):
        parents: list[Optional[int]] = [None]
        head = 0
        while head < len(parents) and len(parents) < target_size:
            if pos == len(buf):
                buf = dist.draw(rng, block)
                pos = 0
            eta = int(buf[pos])
            pos += 1
            take = min(eta, target_size - len(parents))
            parents.extend([head] * take)
            head += 1
        if len(parents) == target_size:
            return build_from_parent_list(parents)
    raise GenerationBudgetExceeded(
        f"no {dist.label} tree reached {target_size} nodes in {max_restarts} attempts"
    )
