"""Run configuration: key = value files, flag overrides, and defaults.

The hyperparameter space is flat, so the config format is too: one
`key = value` per line, `#` starts a comment, later flags win over the file.
Topologies with published settings get them filled in automatically when a
key is left unspecified.
"""

from __future__ import annotations

from dataclasses import dataclass

from .exceptions import ConfigError

COMMANDS = ("train", "eval", "gradcheck", "stochastic-check")

# free_iters, clamped_iters, epsilon, beta, learning rates per published row.
HYPERPARAMETER_TABLE = {
    (784, 500, 10): (20, 4, 0.5, 1.0, (0.1, 0.05)),
    (784, 500, 500, 10): (100, 6, 0.5, 1.0, (0.4, 0.1, 0.01)),
    (784, 500, 500, 500, 10): (500, 8, 0.5, 1.0, (0.128, 0.032, 0.008, 0.002)),
}


def _parse_int(text):
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"expected an integer, got {text!r}") from None


def _parse_float(text):
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"expected a number, got {text!r}") from None


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ConfigError(f"expected true/false, got {text!r}")


def _parse_topology(text):
    try:
        sizes = tuple(int(part) for part in text.split("-"))
    except ValueError:
        raise ConfigError(f"expected sizes like 784-500-10, got {text!r}") from None
    if len(sizes) < 2 or any(d < 1 for d in sizes):
        raise ConfigError(f"bad topology {text!r}")
    return sizes


def _parse_rates(text):
    try:
        rates = tuple(float(part) for part in text.split(","))
    except ValueError:
        raise ConfigError(f"expected comma-separated rates like 0.1,0.05, got {text!r}") from None
    if not rates or any(r <= 0 for r in rates):
        raise ConfigError(f"learning rates must be positive, got {text!r}")
    return rates


def _parse_precision(text):
    if text not in ("f32", "f64"):
        raise ConfigError(f"expected f32 or f64, got {text!r}")
    return text


def _parse_split_name(text):
    if text not in ("train", "val"):
        raise ConfigError(f"expected train or val, got {text!r}")
    return text


def _parse_str(text):
    return text


# key -> (converter, help)
KEYS = {
    "topology": (_parse_topology, "layer sizes, e.g. 784-500-10"),
    "beta": (_parse_float, "nudging magnitude for the second phase"),
    "random_beta_sign": (_parse_bool, "draw the nudging sign per example"),
    "epsilon": (_parse_float, "relaxation step size in (0, 1]"),
    "free_iters": (_parse_int, "first-phase iteration budget"),
    "clamped_iters": (_parse_int, "second-phase iteration budget"),
    "learning_rates": (_parse_rates, "per-layer rates, e.g. 0.1,0.05"),
    "minibatch_size": (_parse_int, "examples per parameter update"),
    "epochs": (_parse_int, "training epochs"),
    "seed": (_parse_int, "master RNG seed"),
    "precision": (_parse_precision, "f32 or f64"),
    "train_images": (_parse_str, "IDX image file (optionally .gz)"),
    "train_labels": (_parse_str, "IDX label file (optionally .gz)"),
    "val_split": (_parse_int, "boundary index between train and validation"),
    "train_subset": (_parse_int, "train on a seeded subset of this size (0 = all)"),
    "val_subset": (_parse_int, "evaluate validation on this many examples (0 = all)"),
    "eval_split": (_parse_split_name, "which split eval reports"),
    "output_dir": (_parse_str, "directory for metrics.csv and checkpoints"),
    "checkpoint": (_parse_str, "checkpoint to load (eval/resume)"),
    "instances": (_parse_int, "instance count scale for the check suites (0 = spec counts)"),
}

_DEFAULTS = {
    "topology": None,
    "beta": None,
    "random_beta_sign": True,
    "epsilon": None,
    "free_iters": None,
    "clamped_iters": None,
    "learning_rates": None,
    "minibatch_size": 20,
    "epochs": 1,
    "seed": 0,
    "precision": "f64",
    "train_images": None,
    "train_labels": None,
    "val_split": None,
    "train_subset": 0,
    "val_subset": 0,
    "eval_split": "val",
    "output_dir": "runs",
    "checkpoint": None,
    "instances": 0,
}


@dataclass
class RunConfig:
    """Fully resolved settings for one command invocation."""

    command: str
    topology: tuple = None
    beta: float = None
    random_beta_sign: bool = True
    epsilon: float = None
    free_iters: int = None
    clamped_iters: int = None
    learning_rates: tuple = None
    minibatch_size: int = 20
    epochs: int = 1
    seed: int = 0
    precision: str = "f64"
    train_images: str = None
    train_labels: str = None
    val_split: int = None
    train_subset: int = 0
    val_subset: int = 0
    eval_split: str = "val"
    output_dir: str = "runs"
    checkpoint: str = None
    instances: int = 0
    explicit_keys: frozenset = frozenset()


def _read_config_file(path):
    values = {}
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as err:
        raise ConfigError(f"cannot read config file {path}: {err}") from None
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in KEYS:
            raise ConfigError(
                f"{path}:{lineno}: unknown key {key!r}; valid keys: {', '.join(sorted(KEYS))}"
            )
        converter = KEYS[key][0]
        try:
            values[key] = converter(value)
        except ConfigError as err:
            raise ConfigError(f"{path}:{lineno}: {key}: {err}") from None
    return values


def parse_config(command, config_path=None, overrides=None):
    """Resolve defaults < config file < flag overrides into a RunConfig.

    overrides maps key names to raw strings (as given on the command line).
    Unknown keys and bad values raise ConfigError naming the offender;
    published hyperparameters are filled in for known topologies.
    """
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; valid: {', '.join(COMMANDS)}")
    values = dict(_DEFAULTS)
    explicit = set()
    if config_path is not None:
        file_values = _read_config_file(config_path)
        values.update(file_values)
        explicit.update(file_values)
    for key, raw in (overrides or {}).items():
        if key not in KEYS:
            raise ConfigError(f"unknown key {key!r}; valid keys: {', '.join(sorted(KEYS))}")
        converter = KEYS[key][0]
        try:
            values[key] = converter(raw)
        except ConfigError as err:
            raise ConfigError(f"--{key}: {err}") from None
        explicit.add(key)
    _fill_topology_defaults(values, explicit)
    return RunConfig(command=command, explicit_keys=frozenset(explicit), **values)


def _fill_topology_defaults(values, explicit):
    topo = values["topology"]
    row = HYPERPARAMETER_TABLE.get(topo)
    if row is not None:
        free, clamped, epsilon, beta, rates = row
        for key, default in (
            ("free_iters", free),
            ("clamped_iters", clamped),
            ("epsilon", epsilon),
            ("beta", beta),
            ("learning_rates", rates),
        ):
            if key not in explicit or values[key] is None:
                values[key] = default
        return
    if values["epsilon"] is None:
        values["epsilon"] = 0.5
    if values["beta"] is None:
        values["beta"] = 1.0
    if topo is not None and values["clamped_iters"] is None:
        # time constant 1 per layer: N/epsilon steps reach the whole depth
        values["clamped_iters"] = max(1, round((len(topo) - 1) / values["epsilon"]))


def require(config, *keys):
    """Raise ConfigError naming any of the given keys that are unset."""
    missing = [k for k in keys if getattr(config, k) in (None, ())]
    if missing:
        raise ConfigError(
            f"{config.command}: missing required settings: {', '.join(missing)}"
        )
