import numpy as np
import pytest
from hypothesis import strategies as st

from delayvax.prob import DelayModel
from delayvax.tree import build_from_parent_list


def path(n):
    return build_from_parent_list([None] + list(range(n - 1)))


def star(leaves):
    return build_from_parent_list([None] + [0] * leaves)


@pytest.fixture
def path4():
    return path(4)


@pytest.fixture
def unit():
    return DelayModel.exponential(1.0, 1.0)


@st.composite
def trees(draw, min_size=1, max_size=40):
    """Random rooted trees with shuffled ids."""
    n = draw(st.integers(min_size, max_size))
    parents = [None] + [draw(st.integers(0, v - 1)) for v in range(1, n)]
    perm = draw(st.permutations(range(n)))
    relabeled = [None] * n
    for v, p in enumerate(parents):
        relabeled[perm[v]] = None if p is None else perm[p]
    return build_from_parent_list(relabeled)


@st.composite
def models(draw):
    lam = draw(st.floats(0.2, 3.0))
    if draw(st.booleans()):
        return DelayModel.exponential(lam, draw(st.floats(0.02, 3.0)))
    return DelayModel.deterministic(lam, draw(st.floats(0.0, 12.0)))


def rng(seed=0):
    return np.random.default_rng(seed)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
