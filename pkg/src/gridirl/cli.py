"""Command line driver: generate worlds, train models, evaluate transfer,
and sweep demonstration counts. Every command is a deterministic function
of its config file, so reruns produce byte-identical outputs."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from .config import ConfigError, ExperimentConfig, SpecMismatchError, load_config
from .nets import (
    AdaGradState,
    NetworkParams,
    conv_network,
    feature_network,
    forward,
    linear_model,
    load_params,
    save_params,
)
from .seeding import (
    BENCH_DEMO_STREAM,
    BENCH_INIT_STREAM,
    DEMO_STREAM,
    MODEL_INIT_STREAM,
    TRANSFER_STREAM,
    derive_seed,
)
from .solver import NumericDivergenceError
from .training import train
from .worlds import (
    World,
    expected_value_difference,
    generate_world,
    sample_demonstrations,
    save_world,
    transfer_evaluate,
    write_pgm,
)

BENCH_DEMO_COUNTS = (8, 16, 32, 64, 128)


def _build_world(cfg: ExperimentConfig) -> World:
    return generate_world(cfg.world.spec(), cfg.world.seed)


def _feature_width(features: np.ndarray) -> int:
    return features.shape[0] if features.ndim == 3 else features.shape[1]


def _build_model(cfg: ExperimentConfig, world: World, init_seed: int) -> NetworkParams:
    features = world.features(cfg.world.features)
    width = _feature_width(features)
    if cfg.model.kind == "linear":
        return linear_model(width, init_seed)
    if cfg.model.kind == "mlp":
        return feature_network(width, cfg.model.hidden, init_seed)
    return conv_network(width, cfg.model.conv_channels, cfg.model.hidden, init_seed)


def _check_model_fits(cfg: ExperimentConfig, world: World, params: NetworkParams) -> None:
    features = world.features(cfg.world.features)
    width = _feature_width(features)
    first = params.layers[0]
    if first.kind == "conv3x3" and features.ndim != 3:
        raise SpecMismatchError(
            "stored model starts with conv3x3 but the configured features are not raw grids"
        )
    if first.n_in != width:
        raise SpecMismatchError(
            f"stored model expects {first.n_in} inputs but "
            f"{cfg.world.features!r} features provide {width}"
        )


def _write_matrix_csv(path, matrix: np.ndarray) -> None:
    with open(path, "w", newline="\n") as fh:
        for row in matrix:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


def _note(path) -> None:
    print(f"wrote {path}")


def _train_once(cfg: ExperimentConfig, world: World, demo_seed: int, init_seed: int, out_dir):
    demos = sample_demonstrations(
        world,
        cfg.demos.n_demos,
        cfg.demos.length,
        cfg.demos.random_action_prob,
        demo_seed,
    )
    params = _build_model(cfg, world, init_seed)
    opt = AdaGradState.for_params(
        params, cfg.optimizer.learning_rate, cfg.optimizer.damping
    )
    report_path = os.path.join(out_dir, "report.csv")
    try:
        report = train(
            world,
            demos,
            params,
            opt,
            cfg.run.iters,
            cfg.run.epsilon,
            weight_decay=cfg.optimizer.weight_decay,
            feature_kind=cfg.world.features,
        )
    except NumericDivergenceError as err:
        partial = getattr(err, "partial_report", None)
        if partial is not None:
            partial.write_csv(report_path)
            _note(report_path)
        raise
    report.write_csv(report_path)
    _note(report_path)
    model_path = os.path.join(out_dir, "model.bin")
    save_params(params, model_path)
    _note(model_path)
    reward, _ = forward(params, world.features(cfg.world.features))
    pgm_path = os.path.join(out_dir, "learned_reward.pgm")
    write_pgm(pgm_path, reward, world.size)
    _note(pgm_path)
    return params, reward


def cmd_generate(cfg: ExperimentConfig) -> int:
    out_dir = cfg.run.out_dir
    os.makedirs(out_dir, exist_ok=True)
    world = _build_world(cfg)
    world_path = os.path.join(out_dir, "world.txt")
    save_world(world, world_path)
    _note(world_path)
    if world.kind == "objectworld":
        named = (("continuous", "features_continuous.csv"),
                 ("discrete", "features_discrete.csv"))
    else:
        named = (("neighborhood", "features_neighborhood.csv"),)
    for kind, filename in named:
        path = os.path.join(out_dir, filename)
        _write_matrix_csv(path, world.features(kind))
        _note(path)
    pgm_path = os.path.join(out_dir, "true_reward.pgm")
    write_pgm(pgm_path, world.true_reward, world.size)
    _note(pgm_path)
    return 0


def cmd_train(cfg: ExperimentConfig) -> int:
    os.makedirs(cfg.run.out_dir, exist_ok=True)
    world = _build_world(cfg)
    seed = cfg.world.seed
    _train_once(
        cfg,
        world,
        demo_seed=derive_seed(seed, DEMO_STREAM),
        init_seed=derive_seed(seed, MODEL_INIT_STREAM),
        out_dir=cfg.run.out_dir,
    )
    return 0


def cmd_eval(cfg: ExperimentConfig, model_path) -> int:
    os.makedirs(cfg.run.out_dir, exist_ok=True)
    world = _build_world(cfg)
    params = load_params(model_path)
    _check_model_fits(cfg, world, params)
    scores, mean = transfer_evaluate(
        params,
        cfg.world.spec(),
        cfg.run.n_transfer_worlds,
        derive_seed(cfg.world.seed, TRANSFER_STREAM),
        feature_kind=cfg.world.features,
    )
    path = os.path.join(cfg.run.out_dir, "transfer.csv")
    with open(path, "w", newline="\n") as fh:
        fh.write("world,evd\n")
        for index, value in enumerate(scores):
            fh.write(f"{index},{value:.17g}\n")
        fh.write(f"mean,{mean:.17g}\n")
    _note(path)
    print(f"transfer mean evd {mean:.17g}")
    return 0


def cmd_bench(cfg: ExperimentConfig) -> int:
    os.makedirs(cfg.run.out_dir, exist_ok=True)
    world = _build_world(cfg)
    seed = cfg.world.seed
    rows = []
    for n_demos in BENCH_DEMO_COUNTS:
        point_cfg = ExperimentConfig(
            world=cfg.world,
            demos=type(cfg.demos)(
                n_demos=n_demos,
                length=cfg.demos.length,
                random_action_prob=cfg.demos.random_action_prob,
            ),
            model=cfg.model,
            optimizer=cfg.optimizer,
            run=cfg.run,
        )
        point_dir = os.path.join(cfg.run.out_dir, f"bench_{n_demos:03d}")
        os.makedirs(point_dir, exist_ok=True)
        params, reward = _train_once(
            point_cfg,
            world,
            demo_seed=derive_seed(seed, BENCH_DEMO_STREAM, n_demos),
            init_seed=derive_seed(seed, BENCH_INIT_STREAM, n_demos),
            out_dir=point_dir,
        )
        evd_train = expected_value_difference(world, reward)
        _, transfer_mean = transfer_evaluate(
            params,
            cfg.world.spec(),
            cfg.run.n_transfer_worlds,
            derive_seed(seed, TRANSFER_STREAM),
            feature_kind=cfg.world.features,
        )
        rows.append((n_demos, evd_train, transfer_mean))
    path = os.path.join(cfg.run.out_dir, "bench.csv")
    with open(path, "w", newline="\n") as fh:
        fh.write("n_demos,evd_train,evd_transfer_mean\n")
        for n_demos, evd_train, transfer_mean in rows:
            fh.write(f"{n_demos},{evd_train:.17g},{transfer_mean:.17g}\n")
    _note(path)
    return 0


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridirl",
        description="Reward learning from demonstrations on gridworld benchmarks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (
        ("generate", "generate a world and write its features and true reward"),
        ("train", "train a reward model on sampled demonstrations"),
        ("eval", "evaluate a stored model on freshly generated transfer worlds"),
        ("bench", "sweep demonstration counts and summarize the results"),
    ):
        cmd = sub.add_parser(name, help=text)
        cmd.add_argument("--config", required=True, help="path to the JSON config")
        if name == "eval":
            cmd.add_argument("--model", required=True, help="path to a model.bin snapshot")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "generate":
            return cmd_generate(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "eval":
            return cmd_eval(cfg, args.model)
        return cmd_bench(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericDivergenceError as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
