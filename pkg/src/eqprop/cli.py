"""Command-line entry point.

    eqprop <command> [--config FILE] [--key value ...]

Commands: train, eval, gradcheck, stochastic-check. Every config-file key is
also accepted as a flag and wins over the file. Exit codes: 0 ok, 1 check
failure, 2 usage/config, 3 I/O, 4 numeric.
"""

from __future__ import annotations

import csv
import os
import sys

import numpy as np

from . import checkpoint, checks, config as config_mod, mnist, training
from .config import COMMANDS, KEYS, RunConfig, parse_config, require
from .exceptions import ConfigError, DataError, FormatError, NumericError, RelaxationError
from .model import Topology
from .training import TrainConfig

EXIT_OK = 0
EXIT_CHECK_FAILURE = 1
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_NUMERIC = 4

METRICS_HEADER = ["epoch", "train_error", "val_error", "mean_energy", "mean_cost", "wall_seconds"]


def _usage():
    lines = [__doc__.strip(), "", "keys:"]
    for key, (_, help_text) in sorted(KEYS.items()):
        lines.append(f"  --{key:<16s} {help_text}")
    return "\n".join(lines)


def parse_argv(argv):
    """Split argv into (command, config path, override dict); ConfigError on misuse."""
    if not argv or argv[0] in ("-h", "--help"):
        print(_usage())
        raise SystemExit(EXIT_OK)
    command = argv[0]
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; valid: {', '.join(COMMANDS)}")
    config_path = None
    overrides = {}
    i = 1
    while i < len(argv):
        arg = argv[i]
        if not arg.startswith("--"):
            raise ConfigError(f"expected --key value, got {arg!r}")
        key = arg[2:]
        if i + 1 >= len(argv):
            raise ConfigError(f"flag --{key} needs a value")
        value = argv[i + 1]
        if key == "config":
            config_path = value
        elif key in KEYS:
            overrides[key] = value
        else:
            raise ConfigError(f"unknown key {key!r}; valid keys: {', '.join(sorted(KEYS))}")
        i += 2
    return command, config_path, overrides


def _require_readable(cfg, *keys):
    require(cfg, *keys)
    for key in keys:
        path = getattr(cfg, key)
        if not os.path.exists(path):
            raise ConfigError(f"{key}: no such file: {path}")


def _train_config(cfg):
    require(cfg, "topology", "beta", "epsilon", "free_iters", "clamped_iters", "learning_rates")
    return TrainConfig(
        beta_magnitude=cfg.beta,
        random_beta_sign=cfg.random_beta_sign,
        epsilon=cfg.epsilon,
        free_iters=cfg.free_iters,
        clamped_iters=cfg.clamped_iters,
        learning_rates=cfg.learning_rates,
        minibatch_size=cfg.minibatch_size,
        epochs=cfg.epochs,
        rng_seed=cfg.seed,
        precision=cfg.precision,
    )


def _load_dataset(cfg):
    _require_readable(cfg, "train_images", "train_labels")
    return mnist.load_dataset(cfg.train_images, cfg.train_labels, split=cfg.val_split)


SUBSET_STREAM = 0x5EED5E7


def _select_train_indices(cfg, dataset):
    indices = dataset.train_indices
    if cfg.train_subset and cfg.train_subset < indices.size:
        rng = np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, SUBSET_STREAM])
        indices = np.sort(rng.choice(indices, size=cfg.train_subset, replace=False))
    return indices


def cmd_train(cfg):
    if cfg.topology is not None and cfg.topology[-1] != 10:
        raise ConfigError("MNIST training needs a 10-unit output layer")
    train_cfg = _train_config(cfg)
    dataset = _load_dataset(cfg)
    start_epoch = 0
    if cfg.checkpoint:
        if not os.path.exists(cfg.checkpoint):
            raise ConfigError(f"checkpoint: no such file: {cfg.checkpoint}")
        ckpt = checkpoint.load_checkpoint(cfg.checkpoint)
        if ckpt.params.topology.layer_sizes != tuple(cfg.topology):
            raise ConfigError(
                f"checkpoint topology {ckpt.params.topology.layer_sizes} "
                f"!= configured {tuple(cfg.topology)}"
            )
        params = ckpt.params
        start_epoch = ckpt.epoch + 1
        train_cfg.rng_seed = ckpt.rng_seed
    else:
        params = training.init_params(Topology(cfg.topology), cfg.seed)
    train_indices = _select_train_indices(cfg, dataset)
    val_indices = dataset.val_indices
    if cfg.val_subset and cfg.val_subset < val_indices.size:
        val_indices = val_indices[: cfg.val_subset]

    os.makedirs(cfg.output_dir, exist_ok=True)
    metrics_path = os.path.join(cfg.output_dir, "metrics.csv")
    ckpt_path = os.path.join(cfg.output_dir, "checkpoint.eqp")
    fresh = start_epoch == 0 or not os.path.exists(metrics_path)
    metrics_file = open(metrics_path, "w" if fresh else "a", newline="")
    writer = csv.writer(metrics_file)
    if fresh:
        writer.writerow(METRICS_HEADER)

    def sink(record):
        writer.writerow(
            [
                record.epoch,
                repr(record.train_error_rate),
                repr(record.val_error_rate),
                repr(record.mean_energy),
                repr(record.mean_cost),
                repr(record.wall_seconds),
            ]
        )
        metrics_file.flush()
        print(
            f"epoch {record.epoch}: train_error {record.train_error_rate:.4f} "
            f"val_error {record.val_error_rate:.4f} ({record.wall_seconds:.1f}s)"
        )

    def checkpoint_fn(p, epoch):
        checkpoint.save_checkpoint(ckpt_path, p, epoch, train_cfg.rng_seed)

    try:
        training.train(
            params,
            dataset,
            train_cfg,
            sink=sink,
            train_indices=train_indices,
            val_indices=val_indices,
            checkpoint_fn=checkpoint_fn,
            start_epoch=start_epoch,
        )
    finally:
        metrics_file.close()
    return EXIT_OK


def cmd_eval(cfg):
    require(cfg, "checkpoint")
    if not os.path.exists(cfg.checkpoint):
        raise ConfigError(f"checkpoint: no such file: {cfg.checkpoint}")
    ckpt = checkpoint.load_checkpoint(cfg.checkpoint)
    if cfg.topology is not None and tuple(cfg.topology) != ckpt.params.topology.layer_sizes:
        raise ConfigError(
            f"checkpoint topology {ckpt.params.topology.layer_sizes} "
            f"!= configured {tuple(cfg.topology)}"
        )
    # adopt the checkpoint topology, then refill its table defaults for any
    # phase settings the user left unspecified
    values = {k: getattr(cfg, k) for k in config_mod._DEFAULTS}
    values["topology"] = ckpt.params.topology.layer_sizes
    config_mod._fill_topology_defaults(values, set(cfg.explicit_keys))
    cfg = RunConfig(command=cfg.command, explicit_keys=cfg.explicit_keys, **values)
    train_cfg = _train_config(cfg)
    dataset = _load_dataset(cfg)
    indices = dataset.train_indices if cfg.eval_split == "train" else dataset.val_indices
    err = training.error_rate(
        ckpt.params, dataset.images[indices], dataset.labels[indices], train_cfg
    )
    print(f"{cfg.eval_split}_error {err!r} ({indices.size} examples)")
    return EXIT_OK


def _run_check_table(results):
    failures = 0
    for result in results:
        print(result.row())
        failures += 0 if result.passed else 1
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return EXIT_OK if failures == 0 else EXIT_CHECK_FAILURE


def cmd_gradcheck(cfg):
    scale = cfg.instances / 50.0 if cfg.instances else 1.0
    return _run_check_table(checks.gradient_checks(seed=cfg.seed, scale=scale))


def cmd_stochastic_check(cfg):
    scale = cfg.instances / 50.0 if cfg.instances else 1.0
    return _run_check_table(checks.stochastic_checks(seed=cfg.seed, scale=scale))


COMMAND_TABLE = {
    "train": cmd_train,
    "eval": cmd_eval,
    "gradcheck": cmd_gradcheck,
    "stochastic-check": cmd_stochastic_check,
}


def run(cfg):
    """Dispatch a resolved RunConfig; returns the process exit status."""
    return COMMAND_TABLE[cfg.command](cfg)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        command, config_path, overrides = parse_argv(argv)
        cfg = parse_config(command, config_path, overrides)
        return run(cfg)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (FormatError, DataError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_IO
    except (NumericError, RelaxationError, FloatingPointError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
