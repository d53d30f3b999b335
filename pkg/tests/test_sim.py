import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delayvax.errors import SourceInPlan
from delayvax.planner import greedy_select
from delayvax.prob import DelayModel
from delayvax.reward import expected_reward
from delayvax.sim import (RunDraws, estimate_reward, raw_csv_rows, run_rng, simulate_counts,
                          simulate_forest_once, simulate_once)
from delayvax.tree import OffspringDistribution, build_from_parent_list, sample_galton_watson

from conftest import models, path, trees

UNIT = DelayModel.exponential(1, 1)


def test_no_plan_infects_everything():
    t = sample_galton_watson(OffspringDistribution("poisson", 2), 40, np.random.default_rng(0))
    out = simulate_once(t, [], UNIT, run_rng(1, 0))
    assert np.all(np.isfinite(out.infection_time)) and out.saved_by_plan == 0 and out.never_infected == 0


def test_instant_immunity_saves_subtree():
    t = build_from_parent_list([None, 0, 1, 1, 2, 0])
    out = simulate_once(t, [1], DelayModel.deterministic(1, 0), run_rng(0, 0))
    assert out.immune_set == {1} and out.saved_by_plan == t.desc_count[1] == 3
    assert out.never_infected == 4


@pytest.mark.parametrize("nodes,plan,value", [(3, [1], 0.5), (4, [1, 2], 1.25)])
def test_small_paths_against_closed_form(nodes, plan, value):
    mean, se = estimate_reward(path(nodes), plan, UNIT, 100_000, seed=12)
    assert abs(mean - value) <= 3 * se


def test_single_run_has_zero_error():
    saved, _, _ = simulate_counts(path(4), [1], UNIT, 1, seed=5)
    assert estimate_reward(path(4), [1], UNIT, 1, seed=5) == (float(saved[0]), 0.0)
    with pytest.raises(ValueError):
        estimate_reward(path(4), [1], UNIT, 0, seed=5)


def test_greedy_plan_against_reward():
    rng = np.random.default_rng(21)
    t = sample_galton_watson(OffspringDistribution("poisson", 3), 200, rng)
    m = DelayModel.exponential(1, 0.1)
    plan = greedy_select(t, 5, m).nodes
    mean, se = estimate_reward(t, plan, m, 10_000, seed=8)
    assert abs(mean - expected_reward(t, plan, m)) <= 3 * se


def test_deterministic_given_seed():
    t = sample_galton_watson(OffspringDistribution.binary(), 100, np.random.default_rng(3))
    a = simulate_once(t, [1, 5], UNIT, run_rng(4, 2))
    b = simulate_once(t, [1, 5], UNIT, run_rng(4, 2))
    assert np.array_equal(a.infection_time, b.infection_time)
    assert (a.immune_set, a.saved_by_plan, a.never_infected, a.tau) == (
        b.immune_set, b.saved_by_plan, b.never_infected, b.tau)
    x = simulate_counts(t, [1, 5], UNIT, 500, seed=4)
    y = simulate_counts(t, [1, 5], UNIT, 500, seed=4)
    assert all(np.array_equal(p, q) for p, q in zip(x, y))


def test_chunking_does_not_change_runs():
    t = sample_galton_watson(OffspringDistribution("poisson", 2), 60, np.random.default_rng(3))
    whole = RunDraws(t, 9, 40)
    a, b = RunDraws(t, 9, 15), RunDraws(t, 9, 25, start=15)
    s_whole, _ = whole.outcome_counts([2, 7], UNIT)
    s_parts = np.concatenate([a.outcome_counts([2, 7], UNIT)[0], b.outcome_counts([2, 7], UNIT)[0]])
    assert np.array_equal(s_whole, s_parts)


@given(trees(min_size=2, max_size=40), models(), st.data())
@settings(max_examples=80, deadline=None)
def test_batch_matches_single_realizations(t, m, data):
    pool = [v for v in range(t.n) if v != t.root]
    plan = data.draw(st.lists(st.sampled_from(pool), unique=True, max_size=6))
    seed = data.draw(st.integers(0, 2**32))
    draws = RunDraws(t, seed, 20)
    saved, never = draws.outcome_counts(plan, m)
    for r in range(20):
        out = simulate_once(t, plan, m, run_rng(seed, r))
        assert (out.saved_by_plan, out.never_infected) == (saved[r], never[r])
        # the earliest-arrival sweep agrees with the top-down pass
        sweep = simulate_once(t, plan, m, run_rng(seed, r), sources=[t.root, t.root])
        assert np.array_equal(sweep.infection_time, out.infection_time)
        assert sweep.immune_set == out.immune_set


@given(trees(min_size=2, max_size=40), models(), st.data())
@settings(max_examples=80, deadline=None)
def test_outcome_invariants(t, m, data):
    src = data.draw(st.lists(st.integers(0, t.n - 1), unique=True, min_size=1, max_size=3))
    pool = [v for v in range(t.n) if v not in src]
    plan = data.draw(st.lists(st.sampled_from(pool), unique=True, max_size=6)) if pool else []
    out = simulate_once(t, plan, m, run_rng(data.draw(st.integers(0, 99)), 0), sources=src)
    assert out.immune_set <= set(plan)
    assert all(out.infection_time[s] == 0 for s in src)
    for v in range(t.n):
        if np.isfinite(out.infection_time[v]) and v not in src:
            assert any(out.infection_time[w] < out.infection_time[v] for w in t.neighbors(v))
    for u in out.immune_set:
        assert out.infection_time[u] == math.inf
    assert out.saved_by_plan <= out.never_infected


def test_vaccinating_a_source_is_rejected():
    with pytest.raises(SourceInPlan):
        simulate_once(path(3), [0], UNIT, run_rng(0, 0))
    with pytest.raises(SourceInPlan):
        simulate_once(path(3), [2], UNIT, run_rng(0, 0), sources=[2])


def test_forest_realization_shares_tau():
    outs = simulate_forest_once([path(4), path(3)], [(0, 1), (1, 1)], UNIT, run_rng(2, 0))
    assert outs[0].tau == outs[1].tau


def test_raw_rows():
    rows = raw_csv_rows([1, 0], [2, 0], [0.5, 3.25])
    assert rows == ["run,saved_by_plan,never_infected,tau_sample", "0,1,2,0.5", "1,0,0,3.25"]
