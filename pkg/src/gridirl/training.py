"""The reward-learning loop.

Each iteration solves the MDP under the model's current reward, compares
expert visitation counts with the counts the soft policy would generate,
and pushes the difference back through the model as an error signal on
the per-state rewards. The loop maximizes the demonstration
log-likelihood under the maximum-entropy trajectory distribution.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .evaluation import evd_against_baseline, true_reward_baseline
from .mdp import Trajectory, validate_trajectory
from .nets import AdaGradState, NetworkParams, adagrad_update, apply_weight_decay, backward, forward
from .solver import (
    NumericDivergenceError,
    StochasticPolicy,
    VisitationCounts,
    propagate_policy,
    soft_value_iteration,
)

__all__ = [
    "DemoSet",
    "TrainRecord",
    "TrainReport",
    "data_gradient_wrt_reward",
    "empirical_start_distribution",
    "expert_counts",
    "gradient_sup_norm",
    "maxent_data_loss",
    "train",
]


@dataclass(frozen=True)
class DemoSet:
    """Fixed-length expert demonstrations tied to the world they came from."""

    trajectories: tuple[Trajectory, ...]
    world: object
    demo_length: int
    n_demos: int

    def __post_init__(self) -> None:
        trajectories = tuple(self.trajectories)
        if not trajectories:
            raise ValueError("a demo set needs at least one trajectory")
        if self.n_demos != len(trajectories):
            raise ValueError(
                f"n_demos {self.n_demos} != {len(trajectories)} trajectories"
            )
        if any(len(t) != self.demo_length for t in trajectories):
            raise ValueError(f"every demonstration must have length {self.demo_length}")
        mdp = self.world.mdp
        for trajectory in trajectories:
            if not validate_trajectory(mdp, trajectory):
                raise ValueError("demonstration contains an impossible transition")
        object.__setattr__(self, "trajectories", trajectories)


def expert_counts(demos: DemoSet) -> VisitationCounts:
    """Per-demo-averaged visitation counts; total mass equals demo_length."""
    mdp = demos.world.mdp
    pair_counts = np.zeros((mdp.n_states, mdp.n_actions))
    for trajectory in demos.trajectories:
        for state, action in trajectory.steps:
            pair_counts[state, action] += 1.0
    pair_counts /= demos.n_demos
    return VisitationCounts(
        state_counts=pair_counts.sum(axis=1),
        state_action_counts=pair_counts,
    )


def empirical_start_distribution(demos: DemoSet) -> np.ndarray:
    """Fraction of demonstrations beginning in each state."""
    starts = np.zeros(demos.world.mdp.n_states)
    for trajectory in demos.trajectories:
        starts[trajectory.steps[0][0]] += 1.0
    return starts / demos.n_demos


def maxent_data_loss(policy: StochasticPolicy, expert: VisitationCounts) -> float:
    """Demonstration log-likelihood: sum of expert counts times log policy.

    Returns -inf when the expert puts mass on an action the policy gives
    zero probability; train() flags that iteration as degenerate.
    """
    pairs = expert.state_action_counts
    if pairs is None:
        raise ValueError("expert counts must include the state-action split")
    probs = policy.action_probs
    if probs.shape != pairs.shape:
        raise ValueError(f"policy shape {probs.shape} != expert shape {pairs.shape}")
    mask = pairs > 0.0
    if np.any(probs[mask] <= 0.0):
        return float("-inf")
    return float(np.sum(pairs[mask] * np.log(probs[mask])))


def data_gradient_wrt_reward(
    expert: VisitationCounts, expected: VisitationCounts
) -> np.ndarray:
    """Expert-minus-expected state visitation mass, the per-state error signal."""
    if expert.state_counts.shape != expected.state_counts.shape:
        raise ValueError(
            f"count shapes differ: {expert.state_counts.shape} vs "
            f"{expected.state_counts.shape}"
        )
    return expert.state_counts - expected.state_counts


def gradient_sup_norm(grads) -> float:
    """Largest absolute entry across all gradient blocks."""
    peak = 0.0
    for grad_w, grad_b in grads:
        peak = max(peak, float(np.max(np.abs(grad_w))))
        if grad_b.size:
            peak = max(peak, float(np.max(np.abs(grad_b))))
    return peak


@dataclass(frozen=True)
class TrainRecord:
    """Per-iteration diagnostics, all computed before the parameter step."""

    iteration: int
    loss: float
    grad_norm: float
    evd_train: float


@dataclass
class TrainReport:
    """Training history plus the final parameters."""

    records: list = field(default_factory=list)
    params: NetworkParams | None = None
    degenerate: bool = False

    def write_csv(self, path) -> None:
        with open(path, "w", newline="\n") as fh:
            fh.write("iter,loss,grad_norm,evd_train\n")
            for rec in self.records:
                fh.write(
                    f"{rec.iteration},{rec.loss:.17g},{rec.grad_norm:.17g},"
                    f"{rec.evd_train:.17g}\n"
                )


def _resolve_feature_kind(world, params: NetworkParams, feature_kind: str | None) -> str:
    if feature_kind is not None:
        return feature_kind
    if params.layers[0].kind == "conv3x3":
        return "raw"
    return world.default_feature_kind


def train(
    world,
    demos: DemoSet,
    params: NetworkParams,
    opt: AdaGradState,
    iters: int,
    epsilon: float,
    *,
    weight_decay: float = 1e-4,
    feature_kind: str | None = None,
    horizon: int | None = None,
    solver_epsilon: float = 1e-6,
    solver_max_iters: int = 5000,
) -> TrainReport:
    """Run the solve/compare/backpropagate loop and return its history.

    Per iteration: forward the model to a reward vector, solve the soft
    backup, propagate the policy for `horizon` steps (the demo length by
    default), take expert-minus-expected visitation as the error signal,
    add weight decay, and apply one adaptive ascent step. Stops early
    when the gradient sup-norm drops below epsilon. Loss, gradient norm,
    and training-world EVD are recorded before each step, so iters=0
    returns the parameters untouched.

    Expected counts are propagated from the demonstrations' empirical
    start distribution, mirroring the unit start mass the expert side
    deposits at each demo's first state. Propagating from the world's
    own start distribution instead would plant model mass at states no
    demonstration can account for, and their rewards would sink without
    bound.
    """
    if iters < 0:
        raise ValueError(f"iters must be nonnegative, got {iters}")
    if epsilon <= 0.0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if horizon is None:
        horizon = demos.demo_length

    mdp = world.mdp
    features = world.features(_resolve_feature_kind(world, params, feature_kind))
    expert = expert_counts(demos)
    propagation_mdp = dataclasses.replace(
        mdp, start_distribution=empirical_start_distribution(demos)
    )
    baseline = true_reward_baseline(world)

    report = TrainReport(records=[], params=params)
    for iteration in range(iters):
        reward, cache = forward(params, features)
        try:
            _, policy = soft_value_iteration(mdp, reward, solver_epsilon, solver_max_iters)
        except NumericDivergenceError as err:
            err.iteration = iteration
            err.partial_report = report
            raise
        expected = propagate_policy(propagation_mdp, policy, horizon)
        loss = maxent_data_loss(policy, expert)
        if loss == float("-inf"):
            report.degenerate = True
        error_signal = data_gradient_wrt_reward(expert, expected)
        grads = backward(params, cache, error_signal)
        grads = apply_weight_decay(grads, params, weight_decay)
        grad_norm = gradient_sup_norm(grads)
        evd = evd_against_baseline(world, baseline, reward)
        report.records.append(TrainRecord(iteration, loss, grad_norm, evd))
        if grad_norm < epsilon:
            break
        adagrad_update(params, grads, opt)
    return report
