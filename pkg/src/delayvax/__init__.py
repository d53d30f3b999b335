"""Choosing which nodes of a tree to vaccinate when immunity arrives late."""

from .errors import DelayVaxError
from .multisource import MultiSourceInstance, decompose, plan_multisource
from .planner import PolicyKind, forest_greedy, greedy_select, select
from .prob import DelayModel, erlang_tail, survival_prob
from .reward import VaccinationPlan, expected_reward, marginal_gain, multisource_reward
from .sim import estimate_reward, simulate_once
from .tree import OffspringDistribution, RootedTree, build_from_parent_list, sample_galton_watson

__version__ = "0.1.0"

__all__ = [
    "DelayModel", "DelayVaxError", "MultiSourceInstance", "OffspringDistribution", "PolicyKind",
    "RootedTree", "VaccinationPlan", "build_from_parent_list", "decompose", "erlang_tail",
    "estimate_reward", "expected_reward", "forest_greedy", "greedy_select", "marginal_gain",
    "multisource_reward", "plan_multisource", "sample_galton_watson", "select", "simulate_once",
    "survival_prob",
]
