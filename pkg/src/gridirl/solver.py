"""Dynamic programming on grid MDPs.

``soft_value_iteration`` runs the smoothed Bellman backup (log-sum-exp in
place of max) whose induced stochastic policy weights trajectories by
exponentiated return; ``hard_value_iteration`` runs the usual optimality
backup; ``policy_value`` evaluates a fixed stochastic policy; and
``propagate_policy`` pushes start-state probability mass forward to get
expected visitation counts. All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mdp import GridMdp, RewardVector

__all__ = [
    "NumericDivergenceError",
    "SOFT_VALUE_INIT",
    "StochasticPolicy",
    "ValueFunctions",
    "VisitationCounts",
    "hard_value_iteration",
    "policy_value",
    "propagate_policy",
    "soft_value_iteration",
]

# Finite stand-in for the -inf value initialisation: exp() of it underflows
# to zero, and each backup sweep shrinks it geometrically, so after enough
# sweeps it washes out of the converged values entirely.
SOFT_VALUE_INIT = -1e20

# A value exceeding this is treated as unbounded growth.
_DIVERGENCE_LIMIT = 1e15

# Sweep budget for the fixed-epsilon iterations (hard backup and policy
# evaluation); generous for any discount the benchmarks use.
_EVAL_MAX_SWEEPS = 500_000

# Action-value gap below this (relative to the value scale) counts as a
# tie, broken toward the lowest action index. Keeps the greedy policy
# stable under positive rescaling of the reward.
_TIE_TOL = 1e-9


class NumericDivergenceError(RuntimeError):
    """A value backup grew without bound or produced non-finite numbers."""

    def __init__(self, message: str, state: int | None = None, iteration: int | None = None):
        super().__init__(message)
        self.state = state
        self.iteration = iteration


@dataclass(frozen=True)
class StochasticPolicy:
    """Per-state action distribution; every row sums to one."""

    action_probs: np.ndarray

    def __post_init__(self) -> None:
        probs = np.array(self.action_probs, dtype=np.float64, order="C")
        if probs.ndim != 2:
            raise ValueError(f"action_probs must be 2-D, got shape {probs.shape}")
        if np.any(probs < 0.0) or not np.all(np.isfinite(probs)):
            raise ValueError("action probabilities must be finite and nonnegative")
        row_error = np.max(np.abs(probs.sum(axis=1) - 1.0))
        if row_error > 1e-9:
            raise ValueError(f"policy rows must sum to 1 (worst deviation {row_error:g})")
        probs.setflags(write=False)
        object.__setattr__(self, "action_probs", probs)


@dataclass(frozen=True)
class ValueFunctions:
    """State values v and action values q from one backup run."""

    v: np.ndarray
    q: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.v, dtype=np.float64)
        q = np.array(self.q, dtype=np.float64, order="C")
        if q.ndim != 2 or v.shape != (q.shape[0],):
            raise ValueError(f"inconsistent value shapes {v.shape} and {q.shape}")
        v.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "q", q)


@dataclass(frozen=True)
class VisitationCounts:
    """Expected (or empirical) visit mass per state, optionally per action."""

    state_counts: np.ndarray
    state_action_counts: np.ndarray | None = None

    def __post_init__(self) -> None:
        states = np.array(self.state_counts, dtype=np.float64)
        if states.ndim != 1 or np.any(states < 0.0) or not np.all(np.isfinite(states)):
            raise ValueError("state counts must be a nonnegative finite vector")
        states.setflags(write=False)
        object.__setattr__(self, "state_counts", states)
        if self.state_action_counts is not None:
            pairs = np.array(self.state_action_counts, dtype=np.float64, order="C")
            if pairs.ndim != 2 or pairs.shape[0] != states.shape[0]:
                raise ValueError(
                    f"state-action counts shape {pairs.shape} does not match "
                    f"{states.shape[0]} states"
                )
            if np.any(pairs < 0.0) or not np.all(np.isfinite(pairs)):
                raise ValueError("state-action counts must be finite and nonnegative")
            if np.max(np.abs(pairs.sum(axis=1) - states)) > 1e-9:
                raise ValueError("state-action counts must sum to the state counts")
            pairs.setflags(write=False)
            object.__setattr__(self, "state_action_counts", pairs)


def _check_reward(mdp: GridMdp, reward: RewardVector) -> np.ndarray:
    out = np.asarray(reward, dtype=np.float64)
    if out.shape != (mdp.n_states,):
        raise ValueError(
            f"reward must have shape ({mdp.n_states},), got {out.shape}"
        )
    if not np.all(np.isfinite(out)):
        raise ValueError("reward entries must be finite")
    return out


def _check_growth(values: np.ndarray, sweep: int, label: str) -> None:
    if not np.all(np.isfinite(values)):
        state = int(np.flatnonzero(~np.isfinite(values))[0])
        raise NumericDivergenceError(
            f"{label} produced a non-finite value at state {state} on sweep {sweep}",
            state=state,
            iteration=sweep,
        )
    if np.max(values) > _DIVERGENCE_LIMIT:
        state = int(np.argmax(values))
        raise NumericDivergenceError(
            f"{label} diverged at state {state} on sweep {sweep}",
            state=state,
            iteration=sweep,
        )


def _backup_values(v: np.ndarray, goal: int | None) -> np.ndarray:
    if goal is None:
        return v
    pinned = v.copy()
    pinned[goal] = 0.0
    return pinned


def soft_value_iteration(
    mdp: GridMdp,
    reward: RewardVector,
    epsilon: float,
    max_iters: int,
) -> tuple[ValueFunctions, StochasticPolicy]:
    """Converge the smoothed backup and return values plus the soft policy.

    Per sweep: q = r + discount * T v and v = log sum_a exp(q), so the
    returned policy exp(q - v) is a proper distribution in every state.
    Values start at a large negative sentinel; a goal state's value is
    pinned to zero at the top of each sweep. Stops when the largest
    per-state change drops below epsilon or after max_iters sweeps.
    """
    r = _check_reward(mdp, reward)
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if max_iters < 1:
        raise ValueError(f"max_iters must be at least 1, got {max_iters}")

    n_states, n_actions = mdp.n_states, mdp.n_actions
    flat_transition = mdp.transition.reshape(n_states * n_actions, n_states)
    v = np.full(n_states, SOFT_VALUE_INIT)
    q = np.empty((n_states, n_actions))
    for sweep in range(max_iters):
        q = (flat_transition @ _backup_values(v, mdp.goal_state)).reshape(n_states, n_actions)
        q *= mdp.discount
        q += r[:, None]
        peak = q.max(axis=1)
        new_v = peak + np.log(np.exp(q - peak[:, None]).sum(axis=1))
        _check_growth(new_v, sweep, "soft value backup")
        change = np.max(np.abs(new_v - v))
        v = new_v
        if change < epsilon:
            break
    # exp(q - v) in row-normalized form: identical by construction of v,
    # but immune to the lost low bits when values sit at sentinel scale.
    shifted = np.exp(q - q.max(axis=1, keepdims=True))
    policy = shifted / shifted.sum(axis=1, keepdims=True)
    return ValueFunctions(v=v, q=q), StochasticPolicy(policy)


def hard_value_iteration(
    mdp: GridMdp,
    reward: RewardVector,
    epsilon: float,
) -> tuple[ValueFunctions, StochasticPolicy]:
    """Optimal values and a deterministic one-hot policy.

    Near-ties in the action values (within a small scale-relative
    tolerance) are broken toward the lowest action index.
    """
    r = _check_reward(mdp, reward)
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if mdp.discount >= 1.0 and mdp.goal_state is None:
        raise NumericDivergenceError(
            "optimality backup cannot converge with discount >= 1 and no goal state"
        )

    n_states, n_actions = mdp.n_states, mdp.n_actions
    flat_transition = mdp.transition.reshape(n_states * n_actions, n_states)
    v = np.zeros(n_states)
    q = np.empty((n_states, n_actions))
    for sweep in range(_EVAL_MAX_SWEEPS):
        q = (flat_transition @ _backup_values(v, mdp.goal_state)).reshape(n_states, n_actions)
        q *= mdp.discount
        q += r[:, None]
        new_v = q.max(axis=1)
        _check_growth(new_v, sweep, "optimality backup")
        change = np.max(np.abs(new_v - v))
        v = new_v
        if change < epsilon:
            break
    else:
        raise NumericDivergenceError(
            f"optimality backup did not converge within {_EVAL_MAX_SWEEPS} sweeps"
        )

    tolerance = _TIE_TOL * np.maximum(1.0, np.abs(v))
    best = (q >= (v - tolerance)[:, None]).argmax(axis=1)
    policy = np.zeros((n_states, n_actions))
    policy[np.arange(n_states), best] = 1.0
    return ValueFunctions(v=v, q=q), StochasticPolicy(policy)


def policy_value(
    mdp: GridMdp,
    policy: StochasticPolicy,
    reward: RewardVector,
    epsilon: float,
) -> np.ndarray:
    """State values of a fixed policy: the fixed point of v = r + discount * P v."""
    r = _check_reward(mdp, reward)
    probs = _check_policy(mdp, policy)
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if mdp.discount >= 1.0:
        raise NumericDivergenceError("policy evaluation requires discount < 1")

    chain = np.einsum("sa,sap->sp", probs, mdp.transition)
    v = np.zeros(mdp.n_states)
    for sweep in range(_EVAL_MAX_SWEEPS):
        new_v = r + mdp.discount * (chain @ v)
        _check_growth(new_v, sweep, "policy evaluation")
        change = np.max(np.abs(new_v - v))
        v = new_v
        if change < epsilon:
            return v
    raise NumericDivergenceError(
        f"policy evaluation did not converge within {_EVAL_MAX_SWEEPS} sweeps"
    )


def _check_policy(mdp: GridMdp, policy: StochasticPolicy) -> np.ndarray:
    probs = policy.action_probs
    if probs.shape != (mdp.n_states, mdp.n_actions):
        raise ValueError(
            f"policy shape {probs.shape} does not match MDP "
            f"({mdp.n_states} states, {mdp.n_actions} actions)"
        )
    return probs


def propagate_policy(
    mdp: GridMdp,
    policy: StochasticPolicy,
    horizon: int,
) -> VisitationCounts:
    """Expected visitation mass accumulated over a fixed horizon.

    Starts from the MDP's start distribution and pushes mass through the
    policy-weighted transitions for ``horizon`` steps. Mass sitting on
    the goal state (if any) is removed before it is counted or moved, so
    goal arrivals absorb probability. The per-action split is the state
    mass times the policy row, and the state counts sum to the horizon
    when no goal drains mass.
    """
    probs = _check_policy(mdp, policy)
    if horizon < 1:
        raise ValueError(f"horizon must be at least 1, got {horizon}")

    flow = np.einsum("sa,sap->sp", probs, mdp.transition)
    mass = mdp.start_distribution.copy()
    totals = np.zeros(mdp.n_states)
    for _ in range(horizon):
        if mdp.goal_state is not None:
            mass[mdp.goal_state] = 0.0
        totals += mass
        mass = mass @ flow
    return VisitationCounts(
        state_counts=totals,
        state_action_counts=totals[:, None] * probs,
    )
