import numpy as np
import pytest
from hypothesis import given, settings

from delayvax.errors import CycleDetected, DisconnectedNode, InvalidNodeId, MultipleRoots
from delayvax.tree import (OffspringDistribution, RootedTree, build_from_parent_list,
                           deepest_ancestor_in, from_edges, reroot, sample_galton_watson)

from conftest import path, star, trees


def test_singleton():
    t = build_from_parent_list([None])
    assert t.n == 1 and list(t.desc_count) == [0] and list(t.depth) == [0]


def test_path_depths_and_counts():
    t = path(3)
    assert list(t.depth) == [0, 1, 2]
    assert list(t.desc_count) == [2, 1, 0]


def test_branching_counts():
    t = build_from_parent_list([None, 0, 0, 1, 1])
    assert list(t.desc_count) == [4, 2, 0, 0, 0]
    assert sorted(t.descendants(1).tolist()) == [3, 4]


def test_is_ancestor():
    t = path(3)
    assert t.is_ancestor(0, 2)
    assert not any(t.is_ancestor(i, i) for i in range(3))
    s = star(2)
    assert not s.is_ancestor(1, 2)


def test_construction_errors():
    with pytest.raises(MultipleRoots):
        build_from_parent_list([None, None, 0])
    with pytest.raises(CycleDetected) as err:
        build_from_parent_list([None, 2, 1])
    assert "1" in str(err.value) and "2" in str(err.value)
    with pytest.raises(InvalidNodeId):
        build_from_parent_list([None, 7])
    with pytest.raises(DisconnectedNode):
        RootedTree.from_text("3 0\n1 0\n")
    with pytest.raises(InvalidNodeId):
        path(3).check_node(3)


def test_deepest_ancestor():
    t = path(4)
    assert deepest_ancestor_in(t, 3, {0, 1}) == 1
    assert deepest_ancestor_in(t, 3, {2}) == 2
    s = star(3)
    assert deepest_ancestor_in(s, 1, {2, 3}) is None


def test_reroot_examples():
    t = path(3)
    assert reroot(t, t.root) == t
    r = reroot(t, 2)
    assert r.root == 2 and list(r.desc_count) == [0, 1, 2] and r.depth[0] == 2
    s = reroot(star(4), 1)
    assert s.depth[0] == 1 and list(s.depth[2:]) == [2, 2, 2] and s.desc_count[1] == 4


def test_text_round_trip(tmp_path):
    t = build_from_parent_list([3, None, 1, 1, 3])
    f = tmp_path / "t.txt"
    t.save(f)
    assert RootedTree.load(f) == t
    assert from_edges(t.n, t.edges(), t.root) == t


@given(trees(max_size=60))
@settings(max_examples=150, deadline=None)
def test_structural_invariants(t):
    assert t.depth[t.root] == 0
    for c, p in t.edges():
        assert t.depth[c] == t.depth[p] + 1
    for i in range(t.n):
        assert t.desc_count[i] == sum(t.desc_count[c] + 1 for c in t.children[i])
    assert sum(t.desc_count[c] + 1 for c in t.children[t.root]) == t.n - 1
    # Euler intervals against ancestor walks
    for j in range(t.n):
        anc = set(t.ancestors(j))
        for i in range(t.n):
            inside = t.tin[i] < t.tin[j] and t.tout[j] <= t.tout[i]
            assert inside == (i in anc) == t.is_ancestor(i, j)
    assert sorted(np.concatenate(t.levels()).tolist()) == list(range(t.n))


@given(trees(min_size=2, max_size=40))
@settings(max_examples=80, deadline=None)
def test_reroot_preserves_edges(t):
    new = reroot(t, t.n - 1)
    assert {frozenset(e) for e in new.edges()} == {frozenset(e) for e in t.edges()}
    assert reroot(new, t.root) == t


def test_offspring_pmfs():
    b = OffspringDistribution.binary()
    assert [b.pmf(k) for k in range(3)] == pytest.approx([1 / 6, 1 / 6, 4 / 6])
    u = OffspringDistribution.parse("discrete_uniform:3")
    assert sum(u.pmf(k) for k in range(7)) == pytest.approx(1) and u.pmf(7) == 0
    with pytest.raises(ValueError):
        OffspringDistribution("discrete_uniform", 2.5)
    with pytest.raises(ValueError):
        OffspringDistribution("poisson", 0)


def test_galton_watson_singleton_and_size():
    rng = np.random.default_rng(1)
    assert sample_galton_watson(OffspringDistribution("poisson", 3), 1, rng).n == 1
    for _ in range(50):
        t = sample_galton_watson(OffspringDistribution("poisson", 3), 100, rng)
        assert t.n == 100 and t.root == 0
        assert list(t.bfs_order) == list(range(100))


def test_galton_watson_binary_mean_offspring():
    # nodes processed before the truncating one kept all their children
    rng = np.random.default_rng(2)
    dist = OffspringDistribution.binary()
    counts = []
    for _ in range(1000):
        t = sample_galton_watson(dist, 1000, rng)
        last = t.parent[t.n - 1]
        counts.extend(len(t.children[v]) for v in range(last))
    assert np.mean(counts) == pytest.approx(1.5, abs=0.05)


def test_galton_watson_deterministic():
    a = sample_galton_watson(OffspringDistribution.binary(), 300, np.random.default_rng(5))
    b = sample_galton_watson(OffspringDistribution.binary(), 300, np.random.default_rng(5))
    assert a == b
