import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from delayvax.prob import DelayModel, erlang_tail, survival_gap, survival_prob

from conftest import models


def test_closed_form_examples():
    m = DelayModel.exponential(1, 1)
    assert survival_prob(m, 1) == 0.5
    assert survival_prob(m, 2) == 0.75
    assert survival_prob(DelayModel.deterministic(1, 0), 1) == 1.0
    assert survival_prob(DelayModel.with_mean(1, 10), 5) == pytest.approx(1 - (1 / 1.1) ** 5, rel=1e-14)
    assert survival_prob(DelayModel.with_mean(1, 10), 5) == pytest.approx(0.37908, abs=5e-6)


@given(models())
@settings(max_examples=50, deadline=None)
def test_source_never_survives(m):
    assert survival_prob(m, 0) == 0.0


def test_monte_carlo_race_depth_five():
    rng = np.random.default_rng(11)
    samples = 1_000_000
    z = rng.gamma(5, 1.0, samples)
    tau = rng.exponential(10.0, samples)
    p = survival_prob(DelayModel.exponential(1, 0.1), 5)
    assert abs(np.mean(z > tau) - p) <= 3 * math.sqrt(p * (1 - p) / samples)


@pytest.mark.parametrize("x", [0.0, 1e-3, 0.7, 5.0, 40.0, 300.0, 900.0, 5000.0])
def test_erlang_tail_matches_regularized_gamma(x):
    for d in [1, 2, 5, 20, 100, 600, 2000]:
        want = special.gammaincc(d, x) if x > 0 else 1.0
        got = erlang_tail(d, x)
        assert got == pytest.approx(want, rel=1e-10, abs=1e-300)


def test_erlang_tail_depth_zero():
    assert erlang_tail(0, 3.0) == 0.0


@given(models(), st.integers(0, 300), st.integers(0, 300))
@settings(max_examples=300, deadline=None)
def test_probability_range_and_monotone(m, a, b):
    lo, hi = min(a, b), max(a, b)
    p_lo, p_hi = survival_prob(m, lo), survival_prob(m, hi)
    assert 0.0 <= p_lo <= p_hi <= 1.0
    gap = survival_gap(m, lo, hi)
    assert gap >= 0.0
    assert gap == pytest.approx(p_hi - p_lo, abs=1e-13)


def test_gap_keeps_precision_where_subtraction_cancels():
    m = DelayModel.exponential(1.0, 1e-3)
    gap = survival_gap(m, 20000, 20001)
    q = 1 / 1.001
    assert gap == pytest.approx(q ** 20000 * (1 - q), rel=1e-10)
    m = DelayModel.deterministic(1.0, 2.0)
    exact = math.exp(-2.0) * 2.0 ** 60 / math.factorial(60)
    assert survival_gap(m, 60, 61) == pytest.approx(exact, rel=1e-10)


def test_array_depths():
    m = DelayModel.exponential(2, 1)
    d = np.arange(6)
    assert np.allclose(survival_prob(m, d), [survival_prob(m, int(i)) for i in d])


def test_invalid_models():
    for bad in (lambda: DelayModel.exponential(0, 1), lambda: DelayModel.exponential(1, 0),
                lambda: DelayModel.deterministic(1, -1)):
        with pytest.raises(ValueError):
            bad()
    with pytest.raises(ValueError):
        survival_prob(DelayModel.exponential(1, 1), -1)
