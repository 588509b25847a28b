"""Flat key=value configuration with dotted sections.

Every field has a default; unknown keys are rejected by name. CLI flags
mirror keys as --section-key (model.J becomes --model-J), with a few short
aliases kept for the common knobs. The fully resolved mapping can be echoed
to text that parses back to the identical configuration.
"""

from .errors import ConfigError

TASKS = ("copy", "addition", "mnist", "pmnist", "charlm")

# key -> (default, help)
DEFAULTS = {
    "task": ("copy", "one of " + ", ".join(TASKS)),
    "seed": (1234, "root seed; all streams derive from it"),
    "paths.out_dir": ("runs/out", "directory for metrics, checkpoints, config echo"),
    "paths.mnist_dir": ("data/mnist", "directory holding the four IDX files"),
    "paths.corpus": ("data/corpus.txt", "character corpus for the charlm task"),
    "model.J": (100, "patches gathered per reduction"),
    "model.p": (4, "feature-map rows per patch"),
    "model.K": (5, "conv output channels (feature map width)"),
    "model.w": (3, "causal conv kernel width"),
    "model.Z": (32, "per-step path width (projection and output)"),
    "model.stacks": (1, "conv+reduction levels in the whole-sequence encoder"),
    "model.blocks": (1, "summed per-step blocks in the charlm encoder"),
    "model.b_mode": ("per_patch", "value-bank layout: per_patch or literal"),
    "model.sigma": (8.0, "gaussian width for per-step patch sampling"),
    "model.activation": ("relu", "activation after each reduction"),
    "model.conv_activation": ("identity", "activation after each conv in a stack"),
    "model.dropout": (0.0, "spatial dropout rate on stack feature maps"),
    "model.plan": ("random", "whole-sequence patch strategy: random or deterministic"),
    "model.ffn_hidden": (0, "feed-forward hidden width; 0 means 4*Z"),
    "train.lr": (0.005, "Adam learning rate"),
    "train.beta1": (0.9, "Adam first-moment decay"),
    "train.beta2": (0.999, "Adam second-moment decay"),
    "train.eps": (1e-8, "Adam denominator epsilon"),
    "train.clip_norm": (1.0, "global gradient-norm clip; 0 disables"),
    "train.batch_size": (128, "training batch size"),
    "train.max_steps": (20000, "optimizer steps before stopping"),
    "train.max_epochs": (0, "epoch cap; 0 means no epoch cap"),
    "train.eval_every": (100, "steps between evaluations"),
    "train.threshold_metric": ("", "early-stop metric name; empty disables"),
    "train.threshold_value": (0.0, "early-stop threshold for threshold_metric"),
    "copy.T": (30, "copy-memory delay; sequence length is T + 20"),
    "copy.train_n": (20000, "copy-memory training samples"),
    "copy.test_n": (2000, "copy-memory test samples"),
    "addition.T": (200, "adding-problem sequence length"),
    "addition.train_n": (22500, "adding-problem training samples"),
    "addition.test_n": (2500, "adding-problem test samples"),
    "mnist.n_train": (2000, "digit training samples drawn from the train files"),
    "mnist.n_test": (2000, "digit test samples drawn from the test files"),
    "charlm.L": (64, "character window length"),
    "charlm.train_frac": (0.9, "leading fraction of the corpus used for training"),
}

# spec'd short aliases in addition to the canonical --section-key flags
FLAG_ALIASES = {
    "--task": "task",
    "--seed": "seed",
    "--out-dir": "paths.out_dir",
    "--max-steps": "train.max_steps",
    "--batch-size": "train.batch_size",
    "--lr": "train.lr",
}


def flag_for_key(key):
    return "--" + key.replace(".", "-").replace("_", "-")


def _coerce(key, raw):
    default = DEFAULTS[key][0]
    if isinstance(raw, type(default)):
        return raw
    text = str(raw).strip()
    try:
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        kind = "integer" if isinstance(default, int) else "number"
        raise ConfigError(f"{key}: expected {kind}, got {text!r}") from None
    return text


def parse_config_text(text, source="<config>"):
    """Parse key=value lines; '#' starts a comment; unknown keys rejected."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = raw
    return out


def resolve(file_text=None, overrides=None, source="<config>"):
    """Defaults, then config file, then flag overrides; returns a typed dict."""
    cfg = {key: default for key, (default, _) in DEFAULTS.items()}
    if file_text is not None:
        for key, raw in parse_config_text(file_text, source).items():
            cfg[key] = _coerce(key, raw)
    for key, raw in (overrides or {}).items():
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}")
        cfg[key] = _coerce(key, raw)
    _validate(cfg)
    return cfg


def _validate(cfg):
    if cfg["task"] not in TASKS:
        raise ConfigError(f"task: expected one of {TASKS}, got {cfg['task']!r}")
    for key in ("model.J", "model.p", "model.K", "model.w", "model.Z",
                "model.stacks", "model.blocks", "train.batch_size"):
        if cfg[key] < 1:
            raise ConfigError(f"{key}: must be >= 1, got {cfg[key]}")
    for key in ("train.max_steps", "train.max_epochs", "train.eval_every",
                "model.ffn_hidden", "copy.train_n", "copy.test_n",
                "addition.train_n", "addition.test_n",
                "mnist.n_train", "mnist.n_test"):
        if cfg[key] < 0:
            raise ConfigError(f"{key}: must be >= 0, got {cfg[key]}")
    if cfg["model.b_mode"] not in ("per_patch", "literal"):
        raise ConfigError(f"model.b_mode: expected per_patch or literal, "
                          f"got {cfg['model.b_mode']!r}")
    if cfg["model.plan"] not in ("random", "deterministic"):
        raise ConfigError(f"model.plan: expected random or deterministic, "
                          f"got {cfg['model.plan']!r}")
    if not 0.0 <= cfg["model.dropout"] < 1.0:
        raise ConfigError(f"model.dropout: must be in [0, 1), got {cfg['model.dropout']}")
    if cfg["model.sigma"] <= 0.0:
        raise ConfigError(f"model.sigma: must be > 0, got {cfg['model.sigma']}")
    if not 0.0 < cfg["charlm.train_frac"] < 1.0:
        raise ConfigError(f"charlm.train_frac: must be in (0, 1), "
                          f"got {cfg['charlm.train_frac']}")


def echo(cfg):
    """Render a resolved config as text that parses back identically."""
    def fmt(value):
        return value if isinstance(value, str) else repr(value)

    return "\n".join(f"{key}={fmt(cfg[key])}" for key in sorted(cfg)) + "\n"
