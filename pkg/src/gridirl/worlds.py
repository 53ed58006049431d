"""Synthetic benchmark worlds with known ground-truth rewards.

An objectworld scatters colored objects over a square grid. A cell's
continuous features are its Euclidean distances to the nearest object of
each color, and its reward depends only on proximity to the first two
colors (any further colors are distractors): +1 within distance 3 of
color 1 and distance 2 of color 2, -1 within distance 3 of color 1
otherwise, 0 elsewhere.

A binaryworld colors every cell blue or red independently with equal
probability. A cell's features are the colors of its 3x3 neighborhood
(out-of-grid cells count as red), and its reward is +1 when exactly four
of those nine cells are blue, -1 when exactly five are, 0 otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evaluation import expected_value_difference
from .mdp import GridMdp, Trajectory, make_gridworld
from .nets import NetworkParams, forward
from .seeding import derive_seed
from .solver import hard_value_iteration
from .training import DemoSet

__all__ = [
    "GenerationError",
    "World",
    "WorldSpec",
    "binaryworld_from_colors",
    "default_n_objects",
    "expected_value_difference",
    "generate_binaryworld",
    "generate_objectworld",
    "generate_world",
    "load_world",
    "objectworld_from_layout",
    "sample_demonstrations",
    "save_world",
    "transfer_evaluate",
    "write_pgm",
]

_FEATURE_KINDS = ("continuous", "discrete", "neighborhood", "raw")

# Row-major scan of a 3x3 neighborhood, center included.
_NEIGHBORHOOD = tuple(
    (d_row, d_col) for d_row in (-1, 0, 1) for d_col in (-1, 0, 1)
)


class GenerationError(RuntimeError):
    """World generation could not satisfy its constraints."""


@dataclass(frozen=True, eq=False)
class World:
    """A benchmark MDP bundled with its true reward and feature encodings."""

    kind: str
    size: int
    seed: int
    mdp: GridMdp
    true_reward: np.ndarray
    raw_channels: np.ndarray
    default_feature_kind: str
    n_colors: int | None = None
    objects: tuple[tuple[int, int, int], ...] | None = None
    cell_colors: np.ndarray | None = None
    features_continuous: np.ndarray | None = None
    features_discrete: np.ndarray | None = None
    features_neighborhood: np.ndarray | None = None

    def features(self, kind: str) -> np.ndarray:
        """The feature encoding named by kind; raises if unavailable."""
        if kind not in _FEATURE_KINDS:
            raise ValueError(f"unknown feature kind {kind!r}")
        table = {
            "continuous": self.features_continuous,
            "discrete": self.features_discrete,
            "neighborhood": self.features_neighborhood,
            "raw": self.raw_channels,
        }
        values = table[kind]
        if values is None:
            raise ValueError(f"{self.kind} worlds have no {kind!r} features")
        return values


def default_n_objects(size: int) -> int:
    """Object count scaling used when a config leaves it unset."""
    return max(2, round(size * size / 40))


def objectworld_from_layout(
    size: int,
    n_colors: int,
    objects,
    seed: int,
    discount: float = 0.9,
    wind: float = 0.0,
) -> World:
    """Build an objectworld from an explicit (row, col, color) listing."""
    if size < 1:
        raise GenerationError(f"grid size must be positive, got {size}")
    if n_colors < 2:
        raise GenerationError(f"objectworlds need at least 2 colors, got {n_colors}")
    objects = tuple((int(r), int(c), int(k)) for r, c, k in objects)
    if not objects:
        raise GenerationError("objectworlds need at least one object")
    cells = set()
    for row, col, color in objects:
        if not (0 <= row < size and 0 <= col < size):
            raise GenerationError(f"object at ({row}, {col}) is off the grid")
        if not 0 <= color < n_colors:
            raise GenerationError(f"object color {color} outside 0..{n_colors - 1}")
        if (row, col) in cells:
            raise GenerationError(f"two objects share cell ({row}, {col})")
        cells.add((row, col))

    rows, cols = np.divmod(np.arange(size * size), size)
    cap = size * np.sqrt(2.0)
    distances = np.full((size * size, n_colors), cap)
    for color in range(n_colors):
        coords = [(r, c) for r, c, k in objects if k == color]
        if not coords:
            continue
        obj = np.array(coords, dtype=np.float64)
        gaps = np.hypot(rows[:, None] - obj[None, :, 0], cols[:, None] - obj[None, :, 1])
        distances[:, color] = gaps.min(axis=1)

    discrete = np.zeros((size * size, n_colors * size))
    for color in range(n_colors):
        for radius in range(1, size + 1):
            discrete[:, color * size + radius - 1] = distances[:, color] < radius

    near_first = distances[:, 0] <= 3.0
    near_second = distances[:, 1] <= 2.0
    reward = np.where(near_first & near_second, 1.0, np.where(near_first, -1.0, 0.0))

    raw = np.zeros((n_colors, size, size))
    for row, col, color in objects:
        raw[color, row, col] = 1.0

    return World(
        kind="objectworld",
        size=size,
        seed=seed,
        mdp=make_gridworld(size, size, discount, wind),
        true_reward=reward,
        raw_channels=raw,
        default_feature_kind="continuous",
        n_colors=n_colors,
        objects=objects,
        features_continuous=distances,
        features_discrete=discrete,
    )


def generate_objectworld(
    size: int,
    n_colors: int,
    n_objects: int,
    seed: int,
    discount: float = 0.9,
    wind: float = 0.0,
) -> World:
    """Place n_objects uniformly at random (no shared cells, uniform colors)."""
    if n_objects < 1:
        raise GenerationError(f"n_objects must be positive, got {n_objects}")
    if n_objects > size * size:
        raise GenerationError(
            f"cannot place {n_objects} objects on a {size}x{size} grid"
        )
    rng = np.random.default_rng(seed)
    cells = rng.choice(size * size, size=n_objects, replace=False)
    colors = rng.integers(0, n_colors, size=n_objects)
    objects = [(int(cell) // size, int(cell) % size, int(color))
               for cell, color in zip(cells, colors)]
    return objectworld_from_layout(size, n_colors, objects, seed, discount, wind)


def binaryworld_from_colors(
    cell_colors,
    seed: int,
    discount: float = 0.9,
    wind: float = 0.0,
) -> World:
    """Build a binaryworld from an explicit 0/1 color grid (1 = blue)."""
    colors = np.array(cell_colors, dtype=np.int64)
    if colors.ndim != 2 or colors.shape[0] != colors.shape[1]:
        raise GenerationError(f"cell colors must be square, got shape {colors.shape}")
    if np.any((colors != 0) & (colors != 1)):
        raise GenerationError("cell colors must be 0 (red) or 1 (blue)")
    size = colors.shape[0]

    padded = np.zeros((size + 2, size + 2), dtype=np.int64)
    padded[1:-1, 1:-1] = colors
    features = np.empty((size * size, len(_NEIGHBORHOOD)))
    for column, (d_row, d_col) in enumerate(_NEIGHBORHOOD):
        window = padded[1 + d_row : 1 + d_row + size, 1 + d_col : 1 + d_col + size]
        features[:, column] = window.reshape(-1)

    blue_counts = features.sum(axis=1)
    reward = np.where(blue_counts == 4, 1.0, np.where(blue_counts == 5, -1.0, 0.0))

    colors.setflags(write=False)
    return World(
        kind="binaryworld",
        size=size,
        seed=seed,
        mdp=make_gridworld(size, size, discount, wind),
        true_reward=reward,
        raw_channels=colors[None, :, :].astype(np.float64),
        default_feature_kind="neighborhood",
        cell_colors=colors,
        features_neighborhood=features,
    )


def generate_binaryworld(
    size: int,
    seed: int,
    discount: float = 0.9,
    wind: float = 0.0,
) -> World:
    """Color each cell blue or red independently with probability 1/2."""
    if size < 1:
        raise GenerationError(f"grid size must be positive, got {size}")
    rng = np.random.default_rng(seed)
    colors = rng.integers(0, 2, size=(size, size))
    return binaryworld_from_colors(colors, seed, discount, wind)


@dataclass(frozen=True)
class WorldSpec:
    """Generation settings for a family of worlds (everything but the seed)."""

    kind: str
    size: int
    n_colors: int | None = None
    n_objects: int | None = None
    discount: float = 0.9
    wind: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("objectworld", "binaryworld"):
            raise ValueError(f"unknown world kind {self.kind!r}")


def generate_world(spec: WorldSpec, seed: int) -> World:
    """Generate one world from a spec, filling in objectworld defaults."""
    if spec.kind == "objectworld":
        n_colors = 2 if spec.n_colors is None else spec.n_colors
        n_objects = default_n_objects(spec.size) if spec.n_objects is None else spec.n_objects
        return generate_objectworld(
            spec.size, n_colors, n_objects, seed, spec.discount, spec.wind
        )
    return generate_binaryworld(spec.size, seed, spec.discount, spec.wind)


def sample_demonstrations(
    world: World,
    n_demos: int,
    demo_length: int,
    random_action_prob: float,
    seed: int,
) -> DemoSet:
    """Roll out a noisy expert: optimal actions with uniform random slips.

    Each demonstration starts from the MDP's start distribution and takes
    demo_length steps; at every step a uniformly random action replaces
    the optimal one with probability random_action_prob.
    """
    if n_demos < 1 or demo_length < 1:
        raise ValueError("n_demos and demo_length must be positive")
    if not 0.0 <= random_action_prob <= 1.0:
        raise ValueError(f"random_action_prob must lie in [0, 1], got {random_action_prob}")

    mdp = world.mdp
    _, optimal = hard_value_iteration(mdp, world.true_reward, 1e-10)
    best_action = optimal.action_probs.argmax(axis=1)

    rng = np.random.default_rng(seed)
    states = np.arange(mdp.n_states)
    trajectories = []
    for _ in range(n_demos):
        state = int(rng.choice(states, p=mdp.start_distribution))
        steps = []
        for _ in range(demo_length):
            if rng.random() < random_action_prob:
                action = int(rng.integers(mdp.n_actions))
            else:
                action = int(best_action[state])
            steps.append((state, action))
            state = int(rng.choice(states, p=mdp.transition[state, action]))
        trajectories.append(Trajectory(tuple(steps)))
    return DemoSet(
        trajectories=tuple(trajectories),
        world=world,
        demo_length=demo_length,
        n_demos=n_demos,
    )


def transfer_evaluate(
    params: NetworkParams,
    spec: WorldSpec,
    n_worlds: int,
    seed: int,
    feature_kind: str | None = None,
) -> tuple[list[float], float]:
    """Score a trained model on freshly generated worlds it never saw.

    World i uses the derived seed (seed, i). Returns the per-world
    expected value differences and their mean.
    """
    if n_worlds < 1:
        raise ValueError(f"n_worlds must be positive, got {n_worlds}")
    scores = []
    for index in range(n_worlds):
        world = generate_world(spec, derive_seed(seed, index))
        if feature_kind is None:
            kind = "raw" if params.layers[0].kind == "conv3x3" else world.default_feature_kind
        else:
            kind = feature_kind
        reward, _ = forward(params, world.features(kind))
        scores.append(expected_value_difference(world, reward))
    return scores, float(np.mean(scores))


def save_world(world: World, path) -> None:
    """Write the compact text form a world can be rebuilt from.

    Objectworlds list one "row col color" line per object under a header
    of size, color count, object count, and seed; binaryworlds list the
    color grid row by row.
    """
    lines = []
    if world.kind == "objectworld":
        lines.append(
            f"objectworld {world.size} {world.n_colors} {len(world.objects)} {world.seed}"
        )
        for row, col, color in world.objects:
            lines.append(f"{row} {col} {color}")
    else:
        lines.append(f"binaryworld {world.size} {world.seed}")
        for row in range(world.size):
            lines.append(" ".join(str(int(v)) for v in world.cell_colors[row]))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def load_world(path, discount: float = 0.9, wind: float = 0.0) -> World:
    """Rebuild a world saved by save_world(); features are recomputed."""
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    if not lines:
        raise ValueError(f"empty world file {path}")
    header = lines[0].split()
    try:
        if header[0] == "objectworld":
            size, n_colors, n_objects, seed = (int(v) for v in header[1:5])
            if len(lines) != 1 + n_objects:
                raise ValueError(f"expected {n_objects} object lines")
            objects = []
            for line in lines[1:]:
                row, col, color = (int(v) for v in line.split())
                objects.append((row, col, color))
            return objectworld_from_layout(size, n_colors, objects, seed, discount, wind)
        if header[0] == "binaryworld":
            size, seed = int(header[1]), int(header[2])
            if len(lines) != 1 + size:
                raise ValueError(f"expected {size} grid rows")
            colors = [[int(v) for v in line.split()] for line in lines[1:]]
            return binaryworld_from_colors(colors, seed, discount, wind)
    except (IndexError, ValueError, GenerationError) as exc:
        raise ValueError(f"malformed world file {path}: {exc}") from exc
    raise ValueError(f"malformed world file {path}: unknown kind {header[0]!r}")


def write_pgm(path, values, size: int) -> None:
    """Render per-state values as an 8-bit grayscale PGM (min-max scaled).

    A constant map renders as all black.
    """
    grid = np.asarray(values, dtype=np.float64).reshape(size, size)
    low, high = grid.min(), grid.max()
    if high > low:
        scaled = (grid - low) / (high - low)
    else:
        scaled = np.zeros_like(grid)
    data = np.rint(scaled * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{size} {size}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
