"""Experiment configuration: a strict JSON schema with sane defaults.

Unknown keys anywhere in the file are rejected, as are values outside
the ranges the library accepts, so a typo fails fast instead of
silently running a different experiment.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .worlds import WorldSpec, default_n_objects

__all__ = [
    "ConfigError",
    "DemosSection",
    "ExperimentConfig",
    "ModelSection",
    "OptimizerSection",
    "RunSection",
    "SpecMismatchError",
    "WorldSection",
    "load_config",
]

_WORLD_KINDS = ("objectworld", "binaryworld")
_MODEL_KINDS = ("linear", "mlp", "conv")
_OBJECTWORLD_FEATURES = ("continuous", "discrete", "raw")
_BINARYWORLD_FEATURES = ("neighborhood", "raw")


class ConfigError(ValueError):
    """The configuration file is malformed or inconsistent."""


class SpecMismatchError(ConfigError):
    """A stored model does not fit the experiment described by the config."""


def _take(section: dict, allowed: tuple, where: str) -> None:
    unknown = set(section) - set(allowed)
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in {where}")


def _get_int(section, key, where, default=None, minimum=None, maximum=None):
    if key not in section:
        if default is None:
            raise ConfigError(f"missing required key {key!r} in {where}")
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}.{key} must be an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{where}.{key} must be >= {minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(f"{where}.{key} must be <= {maximum}, got {value}")
    return value


def _get_float(section, key, where, default, minimum=None, maximum=None,
               exclusive_min=False, exclusive_max=False):
    if key not in section:
        return default
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {value!r}")
    value = float(value)
    if minimum is not None and (value < minimum or (exclusive_min and value == minimum)):
        raise ConfigError(f"{where}.{key} is out of range: {value}")
    if maximum is not None and (value > maximum or (exclusive_max and value == maximum)):
        raise ConfigError(f"{where}.{key} is out of range: {value}")
    return value


def _get_choice(section, key, where, choices, default=None):
    if key not in section:
        if default is None:
            raise ConfigError(f"missing required key {key!r} in {where}")
        return default
    value = section[key]
    if value not in choices:
        raise ConfigError(f"{where}.{key} must be one of {choices}, got {value!r}")
    return value


def _get_int_list(section, key, where, default):
    if key not in section:
        return tuple(default)
    values = section[key]
    if not isinstance(values, list) or not values:
        raise ConfigError(f"{where}.{key} must be a nonempty list of integers")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, int) or v < 1:
            raise ConfigError(f"{where}.{key} entries must be positive integers")
    return tuple(values)


@dataclass(frozen=True)
class WorldSection:
    kind: str
    size: int
    seed: int
    n_colors: int | None
    n_objects: int | None
    discount: float
    wind: float
    features: str

    @classmethod
    def from_dict(cls, section: dict) -> "WorldSection":
        _take(section, ("kind", "size", "seed", "n_colors", "n_objects",
                        "discount", "wind", "features"), "world")
        kind = _get_choice(section, "kind", "world", _WORLD_KINDS)
        size = _get_int(section, "size", "world", minimum=1)
        seed = _get_int(section, "seed", "world", minimum=0)
        discount = _get_float(section, "discount", "world", 0.9,
                              minimum=0.0, maximum=1.0, exclusive_max=True)
        wind = _get_float(section, "wind", "world", 0.0, minimum=0.0, maximum=1.0)
        if kind == "objectworld":
            n_colors = _get_int(section, "n_colors", "world", default=2, minimum=2)
            n_objects = _get_int(section, "n_objects", "world",
                                 default=default_n_objects(size),
                                 minimum=1, maximum=size * size)
            features = _get_choice(section, "features", "world",
                                   _OBJECTWORLD_FEATURES, default="continuous")
        else:
            for key in ("n_colors", "n_objects"):
                if key in section:
                    raise ConfigError(f"world.{key} is not valid for binaryworld")
            n_colors = None
            n_objects = None
            features = _get_choice(section, "features", "world",
                                   _BINARYWORLD_FEATURES, default="neighborhood")
        return cls(kind, size, seed, n_colors, n_objects, discount, wind, features)

    def spec(self) -> WorldSpec:
        return WorldSpec(
            kind=self.kind,
            size=self.size,
            n_colors=self.n_colors,
            n_objects=self.n_objects,
            discount=self.discount,
            wind=self.wind,
        )


@dataclass(frozen=True)
class DemosSection:
    n_demos: int
    length: int
    random_action_prob: float

    @classmethod
    def from_dict(cls, section: dict) -> "DemosSection":
        _take(section, ("n_demos", "length", "random_action_prob"), "demos")
        return cls(
            n_demos=_get_int(section, "n_demos", "demos", default=64, minimum=1),
            length=_get_int(section, "length", "demos", default=8, minimum=1),
            random_action_prob=_get_float(section, "random_action_prob", "demos",
                                          0.3, minimum=0.0, maximum=1.0),
        )


@dataclass(frozen=True)
class ModelSection:
    kind: str
    hidden: tuple
    conv_channels: tuple

    @classmethod
    def from_dict(cls, section: dict) -> "ModelSection":
        _take(section, ("kind", "hidden", "conv_channels"), "model")
        kind = _get_choice(section, "kind", "model", _MODEL_KINDS, default="mlp")
        if kind == "linear" and "hidden" in section:
            raise ConfigError("model.hidden is not valid for linear models")
        if kind != "conv" and "conv_channels" in section:
            raise ConfigError("model.conv_channels is only valid for conv models")
        hidden = () if kind == "linear" else _get_int_list(section, "hidden", "model", (32, 32))
        conv_channels = _get_int_list(section, "conv_channels", "model", (16, 16)) \
            if kind == "conv" else ()
        return cls(kind=kind, hidden=hidden, conv_channels=conv_channels)


@dataclass(frozen=True)
class OptimizerSection:
    learning_rate: float
    damping: float
    weight_decay: float

    @classmethod
    def from_dict(cls, section: dict) -> "OptimizerSection":
        _take(section, ("learning_rate", "damping", "weight_decay"), "optimizer")
        return cls(
            learning_rate=_get_float(section, "learning_rate", "optimizer",
                                     0.1, minimum=0.0, exclusive_min=True),
            damping=_get_float(section, "damping", "optimizer",
                               1e-8, minimum=0.0, exclusive_min=True),
            weight_decay=_get_float(section, "weight_decay", "optimizer",
                                    1e-4, minimum=0.0),
        )


@dataclass(frozen=True)
class RunSection:
    iters: int
    epsilon: float
    n_transfer_worlds: int
    out_dir: str

    @classmethod
    def from_dict(cls, section: dict) -> "RunSection":
        _take(section, ("iters", "epsilon", "n_transfer_worlds", "out_dir"), "run")
        out_dir = section.get("out_dir")
        if not isinstance(out_dir, str) or not out_dir:
            raise ConfigError("run.out_dir must be a nonempty string")
        return cls(
            iters=_get_int(section, "iters", "run", default=200, minimum=0),
            epsilon=_get_float(section, "epsilon", "run", 1e-4,
                               minimum=0.0, exclusive_min=True),
            n_transfer_worlds=_get_int(section, "n_transfer_worlds", "run",
                                       default=10, minimum=1),
            out_dir=out_dir,
        )


@dataclass(frozen=True)
class ExperimentConfig:
    world: WorldSection
    demos: DemosSection
    model: ModelSection
    optimizer: OptimizerSection
    run: RunSection

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        _take(data, ("world", "demos", "model", "optimizer", "run"), "config")
        for key in ("world", "run"):
            if key not in data:
                raise ConfigError(f"missing required section {key!r}")
        for key, value in data.items():
            if not isinstance(value, dict):
                raise ConfigError(f"section {key!r} must be a JSON object")
        config = cls(
            world=WorldSection.from_dict(data["world"]),
            demos=DemosSection.from_dict(data.get("demos", {})),
            model=ModelSection.from_dict(data.get("model", {})),
            optimizer=OptimizerSection.from_dict(data.get("optimizer", {})),
            run=RunSection.from_dict(data.get("run", {})),
        )
        if config.model.kind == "conv" and config.world.features != "raw":
            raise ConfigError("conv models require world.features = \"raw\"")
        return config

    def to_dict(self) -> dict:
        world: dict = {
            "kind": self.world.kind,
            "size": self.world.size,
            "seed": self.world.seed,
            "discount": self.world.discount,
            "wind": self.world.wind,
            "features": self.world.features,
        }
        if self.world.kind == "objectworld":
            world["n_colors"] = self.world.n_colors
            world["n_objects"] = self.world.n_objects
        model: dict = {"kind": self.model.kind}
        if self.model.kind != "linear":
            model["hidden"] = list(self.model.hidden)
        if self.model.kind == "conv":
            model["conv_channels"] = list(self.model.conv_channels)
        return {
            "world": world,
            "demos": {
                "n_demos": self.demos.n_demos,
                "length": self.demos.length,
                "random_action_prob": self.demos.random_action_prob,
            },
            "model": model,
            "optimizer": {
                "learning_rate": self.optimizer.learning_rate,
                "damping": self.optimizer.damping,
                "weight_decay": self.optimizer.weight_decay,
            },
            "run": {
                "iters": self.run.iters,
                "epsilon": self.run.epsilon,
                "n_transfer_worlds": self.run.n_transfer_worlds,
                "out_dir": self.run.out_dir,
            },
        }


def load_config(path) -> ExperimentConfig:
    """Parse and validate a JSON config file."""
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return ExperimentConfig.from_dict(data)
