"""Finite MDPs on regular 2-D grids.

States are grid cells indexed row-major from the top-left cell, so
``state = row * width + col``. The five actions, in index order, are up,
down, left, right, stay; "up" moves toward higher row indices, and any
move that would leave the grid keeps the agent in place instead.

A reward is a plain float64 vector with one entry per state
(``RewardVector``); rewards never depend on the action taken.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ACTION_NAMES",
    "GridMdp",
    "RewardVector",
    "Trajectory",
    "make_gridworld",
    "validate_trajectory",
    "with_goal",
]

RewardVector = np.ndarray

ACTION_NAMES = ("up", "down", "left", "right", "stay")
_DELTAS = ((1, 0), (-1, 0), (0, -1), (0, 1), (0, 0))

_MASS_TOL = 1e-12


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    out = np.array(values, dtype=dtype, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GridMdp:
    """A finite MDP with a dense transition tensor and an optional goal.

    ``transition[s, a, t]`` is the probability of landing in state ``t``
    after taking action ``a`` in state ``s``; every (s, a) row sums to
    one. ``goal_state`` is None for the benchmark worlds and marks an
    absorbing target cell otherwise.
    """

    n_states: int
    n_actions: int
    transition: np.ndarray
    discount: float
    start_distribution: np.ndarray
    goal_state: int | None = None

    def __post_init__(self) -> None:
        if self.n_states < 1 or self.n_actions < 1:
            raise ValueError("n_states and n_actions must be positive")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError(f"discount must lie in [0, 1], got {self.discount}")

        transition = np.array(self.transition, dtype=np.float64, order="C")
        expected = (self.n_states, self.n_actions, self.n_states)
        if transition.shape != expected:
            raise ValueError(
                f"transition tensor must have shape {expected}, got {transition.shape}"
            )
        if np.any(transition < 0.0) or np.any(transition > 1.0):
            raise ValueError("transition probabilities must lie in [0, 1]")
        row_error = np.max(np.abs(transition.sum(axis=2) - 1.0))
        if row_error > _MASS_TOL:
            raise ValueError(
                f"transition rows must sum to 1 (worst deviation {row_error:g})"
            )

        start = np.array(self.start_distribution, dtype=np.float64, order="C")
        if start.shape != (self.n_states,):
            raise ValueError(
                f"start distribution must have shape ({self.n_states},), got {start.shape}"
            )
        if np.any(start < 0.0):
            raise ValueError("start distribution entries must be nonnegative")
        if abs(start.sum() - 1.0) > _MASS_TOL:
            raise ValueError("start distribution must sum to 1")

        if self.goal_state is not None:
            if not 0 <= self.goal_state < self.n_states:
                raise ValueError(
                    f"goal state {self.goal_state} outside 0..{self.n_states - 1}"
                )
            object.__setattr__(self, "goal_state", int(self.goal_state))

        transition.setflags(write=False)
        start.setflags(write=False)
        object.__setattr__(self, "n_states", int(self.n_states))
        object.__setattr__(self, "n_actions", int(self.n_actions))
        object.__setattr__(self, "transition", transition)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "start_distribution", start)


@dataclass(frozen=True)
class Trajectory:
    """A sequence of (state, action) pairs of length at least one."""

    steps: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        steps = tuple((int(s), int(a)) for s, a in self.steps)
        if not steps:
            raise ValueError("a trajectory needs at least one step")
        object.__setattr__(self, "steps", steps)

    def __len__(self) -> int:
        return len(self.steps)


def make_gridworld(height: int, width: int, discount: float, wind: float = 0.0) -> GridMdp:
    """Build the five-action MDP on a height x width grid.

    The intended move succeeds with probability ``1 - wind``; with
    probability ``wind`` the effect of a uniformly random action
    (possibly the intended one) is applied instead. The start
    distribution is uniform and there is no goal state.
    """
    if height < 1 or width < 1:
        raise ValueError("grid dimensions must be positive")
    if not 0.0 <= wind <= 1.0:
        raise ValueError(f"wind must lie in [0, 1], got {wind}")

    n_states = height * width
    n_actions = len(_DELTAS)
    landing = np.empty((n_states, n_actions), dtype=np.int64)
    for state in range(n_states):
        row, col = divmod(state, width)
        for action, (d_row, d_col) in enumerate(_DELTAS):
            new_row = min(max(row + d_row, 0), height - 1)
            new_col = min(max(col + d_col, 0), width - 1)
            landing[state, action] = new_row * width + new_col

    transition = np.zeros((n_states, n_actions, n_states))
    for state in range(n_states):
        for action in range(n_actions):
            transition[state, action, landing[state, action]] += 1.0 - wind
            for other in range(n_actions):
                transition[state, action, landing[state, other]] += wind / n_actions

    start = np.full(n_states, 1.0 / n_states)
    return GridMdp(n_states, n_actions, transition, discount, start)


def validate_trajectory(mdp: GridMdp, trajectory: Trajectory) -> bool:
    """Check a trajectory against an MDP.

    Raises ValueError if any state or action index is out of range.
    Returns True when every consecutive transition has positive
    probability, False otherwise; the final action has no successor to
    check.
    """
    for state, action in trajectory.steps:
        if not 0 <= state < mdp.n_states:
            raise ValueError(f"state {state} outside 0..{mdp.n_states - 1}")
        if not 0 <= action < mdp.n_actions:
            raise ValueError(f"action {action} outside 0..{mdp.n_actions - 1}")
    for (state, action), (next_state, _) in zip(trajectory.steps, trajectory.steps[1:]):
        if mdp.transition[state, action, next_state] <= 0.0:
            return False
    return True


def with_goal(mdp: GridMdp, goal_state: int) -> GridMdp:
    """A copy of the MDP with the given cell marked as the goal."""
    return dataclasses.replace(mdp, goal_state=goal_state)
