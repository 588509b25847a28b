"""Task models: encoder + head + loss/metric for each built-in task.

Every model exposes the same surface for the trainer and the CLI:
forward(inputs, training) -> prediction Tensor, loss(pred, targets) ->
scalar Tensor, metric_stats(pred_data, targets) -> (numerator, count),
params(), and the patch plans used (for checkpointing).
"""

import numpy as np

from . import tensor as T
from .config import TASKS
from .errors import ConfigError
from .layers import Dense, IglooSeq, IglooStack
from .patch_plan import (
    make_causal_seq_plan,
    make_deterministic_plan,
    make_random_plan,
)
from .rng import stream_rng, stream_seed
from .tasks import COPY_PAYLOAD, COPY_SYMBOLS, one_hot
from .tensor import Tensor


def _make_plans(cfg, length, root_seed):
    n = cfg["model.stacks"]
    if cfg["model.plan"] == "deterministic":
        return [make_deterministic_plan(length, cfg["model.J"], cfg["model.p"])
                for _ in range(n)]
    return [
        make_random_plan(length, cfg["model.J"], cfg["model.p"],
                         seed=stream_seed(root_seed, "patches", index=i))
        for i in range(n)
    ]


def _make_stack(cfg, length, n_in, root_seed):
    init_rng = stream_rng(root_seed, "init")
    dropout_rng = stream_rng(root_seed, "dropout")
    plans = _make_plans(cfg, length, root_seed)
    return IglooStack(
        plans, n_in, cfg["model.K"], cfg["model.w"], init_rng,
        activation=cfg["model.activation"],
        conv_activation=cfg["model.conv_activation"],
        dropout=cfg["model.dropout"], dropout_rng=dropout_rng,
    )


class ClassifierModel:
    """Whole-sequence encoder + dense head over a fixed class count."""

    metric_name = "accuracy"
    metric_mode = "max"

    def __init__(self, cfg, length, n_in, n_classes, root_seed):
        self.length = length
        self.encoder = _make_stack(cfg, length, n_in, root_seed)
        head_rng = stream_rng(root_seed, "init", index=1)
        self.head = Dense(self.encoder.out_width, n_classes, head_rng, name="head")

    def encode(self, inputs):
        raise NotImplementedError

    def forward(self, inputs, training=False):
        x = Tensor(self.encode(inputs))
        return self.head(self.encoder(x, training=training))

    def loss(self, pred, targets):
        return T.softmax_cross_entropy(pred, targets)

    def metric_stats(self, pred_data, targets):
        hits = np.argmax(pred_data, axis=-1) == targets
        return float(hits.sum()), int(hits.size)

    def params(self):
        return self.encoder.params() + self.head.params()

    def plans(self):
        return [r.plan for r in self.encoder.reducers]

    def set_plans(self, plans):
        for reducer, plan in zip(self.encoder.reducers, plans):
            reducer.plan = plan

    def core_param_counts(self):
        return [r.core_param_count for r in self.encoder.reducers]


class CopyModel(ClassifierModel):
    """Copy-memory: recall ten opening symbols after a long blank delay.

    Input symbols 0..9 arrive one-hot; the head emits ten positions of
    eight-way logits, scored against the opening payload.
    """

    task = "copy"

    def __init__(self, cfg, root_seed):
        length = cfg["copy.T"] + 2 * COPY_PAYLOAD
        super().__init__(cfg, length, n_in=COPY_PAYLOAD,
                         n_classes=COPY_PAYLOAD * COPY_SYMBOLS, root_seed=root_seed)

    def encode(self, inputs):
        return one_hot(inputs, COPY_PAYLOAD)

    def forward(self, inputs, training=False):
        flat = super().forward(inputs, training)
        return T.reshape(flat, (inputs.shape[0], COPY_PAYLOAD, COPY_SYMBOLS))


class DigitsModel(ClassifierModel):
    """Digit images as 784-step pixel sequences, ten-way classification."""

    task = "mnist"

    def __init__(self, cfg, root_seed):
        super().__init__(cfg, length=784, n_in=1, n_classes=10, root_seed=root_seed)

    def encode(self, inputs):
        return inputs


class AdditionModel:
    """Adding problem: regress the sum of the two marked values."""

    task = "addition"
    metric_name = "mse"
    metric_mode = "min"

    def __init__(self, cfg, root_seed):
        self.length = cfg["addition.T"]
        self.encoder = _make_stack(cfg, self.length, 2, root_seed)
        head_rng = stream_rng(root_seed, "init", index=1)
        self.head = Dense(self.encoder.out_width, 1, head_rng, name="head")

    def forward(self, inputs, training=False):
        return self.head(self.encoder(Tensor(inputs), training=training))

    def loss(self, pred, targets):
        return T.mse_loss(pred, targets)

    def metric_stats(self, pred_data, targets):
        err = pred_data - targets
        return float(np.sum(err * err)), int(err.shape[0])

    def params(self):
        return self.encoder.params() + self.head.params()

    def plans(self):
        return [r.plan for r in self.encoder.reducers]

    def set_plans(self, plans):
        for reducer, plan in zip(self.encoder.reducers, plans):
            reducer.plan = plan

    def core_param_counts(self):
        return [r.core_param_count for r in self.encoder.reducers]


class CharLmModel:
    """Character-level next-step prediction with the per-step encoder."""

    task = "charlm"
    metric_name = "ce"
    metric_mode = "min"

    def __init__(self, cfg, vocab_size, root_seed):
        self.length = cfg["charlm.L"]
        self.vocab_size = vocab_size
        init_rng = stream_rng(root_seed, "init")
        plans = [
            make_causal_seq_plan(self.length, cfg["model.J"], cfg["model.p"],
                                 sigma=cfg["model.sigma"],
                                 seed=stream_seed(root_seed, "patches", index=i))
            for i in range(cfg["model.blocks"])
        ]
        self.encoder = IglooSeq(
            plans, vocab_size, cfg["model.K"], cfg["model.w"], cfg["model.Z"],
            cfg["model.b_mode"], init_rng, ffn_hidden=cfg["model.ffn_hidden"],
        )
        head_rng = stream_rng(root_seed, "init", index=1)
        self.head = Dense(cfg["model.Z"], vocab_size, head_rng, name="head")

    def forward(self, inputs, training=False):
        x = Tensor(one_hot(inputs, self.vocab_size))
        return self.head(self.encoder(x, training=training))

    def loss(self, pred, targets):
        return T.softmax_cross_entropy(pred, targets)

    def metric_stats(self, pred_data, targets):
        # summed per-step cross entropy, positions as the count
        shifted = pred_data - pred_data.max(axis=-1, keepdims=True)
        logz = np.log(np.sum(np.exp(shifted), axis=-1))
        picked = np.take_along_axis(shifted, targets[..., None], axis=-1)[..., 0]
        return float(np.sum(logz - picked)), int(targets.size)

    def params(self):
        return self.encoder.params() + self.head.params()

    def plans(self):
        return [blk.plan for blk in self.encoder.blocks]

    def set_plans(self, plans):
        for blk, plan in zip(self.encoder.blocks, plans):
            blk.plan = plan

    def core_param_counts(self):
        return [blk.core_param_count for blk in self.encoder.blocks]


def build_model(cfg, vocab_size=None):
    """Construct the model for cfg['task'] from the root seed's streams."""
    task = cfg["task"]
    root_seed = cfg["seed"]
    if task == "copy":
        return CopyModel(cfg, root_seed)
    if task == "addition":
        return AdditionModel(cfg, root_seed)
    if task in ("mnist", "pmnist"):
        return DigitsModel(cfg, root_seed)
    if task == "charlm":
        if vocab_size is None:
            raise ConfigError("charlm model needs the corpus vocabulary size")
        return CharLmModel(cfg, vocab_size, root_seed)
    raise ConfigError(f"task: expected one of {TASKS}, got {task!r}")
