"""Scoring learned rewards by the value an optimal planner loses.

The expected value difference compares two agents under the true reward:
one plans optimally against the true reward, the other plans optimally
against the learned reward. Both are evaluated with the same code path,
so handing in the true reward itself scores exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .solver import StochasticPolicy, hard_value_iteration, policy_value

__all__ = [
    "TrueRewardBaseline",
    "evd_against_baseline",
    "expected_value_difference",
    "true_reward_baseline",
]

_PLAN_EPS = 1e-10
_VALUE_EPS = 1e-12


@dataclass(frozen=True)
class TrueRewardBaseline:
    """Optimal policy under the true reward and its evaluated values."""

    policy: StochasticPolicy
    values: np.ndarray


def true_reward_baseline(world) -> TrueRewardBaseline:
    """Solve the world's true reward once; reuse across many comparisons."""
    _, policy = hard_value_iteration(world.mdp, world.true_reward, _PLAN_EPS)
    values = policy_value(world.mdp, policy, world.true_reward, _VALUE_EPS)
    return TrueRewardBaseline(policy=policy, values=values)


def evd_against_baseline(world, baseline: TrueRewardBaseline, learned_reward) -> float:
    """Expected value difference of a learned reward given a solved baseline."""
    _, learned_policy = hard_value_iteration(world.mdp, learned_reward, _PLAN_EPS)
    learned_values = policy_value(world.mdp, learned_policy, world.true_reward, _VALUE_EPS)
    evd = float(world.mdp.start_distribution @ (baseline.values - learned_values))
    # Identical plans give exactly 0; tiny negatives are evaluation noise.
    if -1e-9 <= evd < 0.0:
        return 0.0
    return evd


def expected_value_difference(world, learned_reward) -> float:
    """Mean over start states of the value lost by planning with learned_reward."""
    return evd_against_baseline(world, true_reward_baseline(world), learned_reward)
