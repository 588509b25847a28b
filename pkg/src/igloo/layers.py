"""IGLOO building blocks.

IglooBase turns a whole sequence into a J-vector: a causal convolution
produces a feature map, J patches of p rows each are gathered from it,
multiplied pointwise by a trainable filter and reduced. Stacking repeats
the reduction on successively convolved feature maps. IglooSeq is the
per-step variant: each step's patch reduction yields logits that are
softmaxed over the J patches and applied to a value path, replacing
pairwise attention.

The patch filter + bias of one reduction hold exactly J*K*p + J trainable
scalars, independent of sequence length.
"""

import numpy as np

from . import tensor as T
from .errors import ConfigError
from .patch_plan import PatchPlan, SeqPatchPlan
from .tensor import Tensor

ACTIVATIONS = ("identity", "relu")


def _apply_activation(x, activation):
    if activation == "relu":
        return T.relu(x)
    if activation == "identity":
        return x
    raise ConfigError(f"unknown activation {activation!r}; choose from {ACTIVATIONS}")


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def small_uniform(rng, shape, dtype):
    return rng.uniform(-0.01, 0.01, size=shape).astype(dtype)


class Dense:
    """Affine projection over the last axis; accepts (B, n) or (B, L, n)."""

    def __init__(self, n_in, n_out, rng, name="dense", dtype=np.float64):
        self.weight = Tensor(
            glorot_uniform(rng, (n_in, n_out), n_in, n_out, dtype),
            requires_grad=True,
            name=f"{name}.weight",
        )
        self.bias = Tensor(
            np.zeros(n_out, dtype=dtype), requires_grad=True, name=f"{name}.bias"
        )

    def __call__(self, x):
        return T.add(T.matmul(x, self.weight), self.bias)

    def params(self):
        return [self.weight, self.bias]


class CausalConv1d:
    """Causal 1D convolution layer: (B, L, M) -> (B, L, K)."""

    def __init__(self, n_in, n_out, width, rng, name="conv", dtype=np.float64):
        if width < 1:
            raise ConfigError(f"conv width must be >= 1, got {width}")
        self.width = width
        self.kernel = Tensor(
            glorot_uniform(rng, (width, n_in, n_out), width * n_in, n_out, dtype),
            requires_grad=True,
            name=f"{name}.kernel",
        )
        self.bias = Tensor(
            small_uniform(rng, (n_out,), dtype), requires_grad=True, name=f"{name}.bias"
        )

    def __call__(self, x):
        return T.causal_conv1d(x, self.kernel, self.bias)

    def params(self):
        return [self.kernel, self.bias]


class PatchReducer:
    """The patch filter: gather J patches from a feature map and reduce.

    With a whole-sequence plan the output is (B, J); with a per-step plan it
    is (B, L, J). Trainable state is the pointwise filter (p, K, J) and the
    bias (J) - exactly J*K*p + J scalars, whatever L is.
    """

    def __init__(self, plan, n_channels, rng, activation="identity",
                 name="reduce", dtype=np.float64):
        p, k, j = plan.patch_size, n_channels, plan.n_patches
        self.plan = plan
        self.activation = activation
        self.filter = Tensor(
            glorot_uniform(rng, (p, k, j), p * k, 1, dtype),
            requires_grad=True,
            name=f"{name}.filter",
        )
        self.bias = Tensor(
            small_uniform(rng, (j,), dtype), requires_grad=True, name=f"{name}.bias"
        )

    @property
    def core_param_count(self):
        p, k, j = self.filter.data.shape
        return j * k * p + j

    def __call__(self, feature_map):
        u = T.patch_reduce(feature_map, self.plan.locations, self.filter, self.bias)
        return _apply_activation(u, self.activation)

    def params(self):
        return [self.filter, self.bias]


class IglooBase:
    """Initial causal conv + one patch reduction: (B, L, M) -> (B, J)."""

    def __init__(self, plan, n_in, n_filters, kernel_width, rng,
                 activation="relu", name="igloo", dtype=np.float64):
        if not isinstance(plan, PatchPlan):
            raise ConfigError("IglooBase needs a whole-sequence PatchPlan")
        self.conv = CausalConv1d(n_in, n_filters, kernel_width, rng,
                                 name=f"{name}.conv", dtype=dtype)
        self.reducer = PatchReducer(plan, n_filters, rng, activation,
                                    name=f"{name}.reduce", dtype=dtype)

    @property
    def core_param_count(self):
        return self.reducer.core_param_count

    def __call__(self, x, training=False):
        return self.reducer(self.conv(x))

    def params(self):
        return self.conv.params() + self.reducer.params()


class IglooStack:
    """Consecutive conv layers, each feeding its own patch reduction.

    Level i convolves the previous level's feature map; the J-vectors from
    all d levels concatenate to (B, d*J). Spatial dropout, when enabled,
    acts on each feature map during training.
    """

    def __init__(self, plans, n_in, n_filters, kernel_width, rng,
                 activation="relu", conv_activation="identity",
                 dropout=0.0, dropout_rng=None, name="stack", dtype=np.float64):
        if len(plans) < 1:
            raise ConfigError("stack needs at least one level")
        if isinstance(n_filters, int):
            n_filters = [n_filters] * len(plans)
        if len(n_filters) != len(plans):
            raise ConfigError("one filter count per stack level required")
        self.conv_activation = conv_activation
        self.dropout = dropout
        self.dropout_rng = dropout_rng
        self.convs = []
        self.reducers = []
        ch = n_in
        for lvl, (plan, k) in enumerate(zip(plans, n_filters)):
            self.convs.append(
                CausalConv1d(ch, k, kernel_width, rng, name=f"{name}.conv{lvl}", dtype=dtype)
            )
            self.reducers.append(
                PatchReducer(plan, k, rng, activation, name=f"{name}.reduce{lvl}", dtype=dtype)
            )
            ch = k

    @property
    def depth(self):
        return len(self.convs)

    @property
    def out_width(self):
        return sum(r.plan.n_patches for r in self.reducers)

    def __call__(self, x, training=False):
        fmap = x
        reductions = []
        for conv, reducer in zip(self.convs, self.reducers):
            fmap = _apply_activation(conv(fmap), self.conv_activation)
            if self.dropout > 0.0 and training:
                fmap = T.spatial_dropout(fmap, self.dropout, training, self.dropout_rng)
            reductions.append(reducer(fmap))
        if len(reductions) == 1:
            return reductions[0]
        return T.concat(reductions, axis=-1)

    def params(self):
        out = []
        for conv, reducer in zip(self.convs, self.reducers):
            out += conv.params() + reducer.params()
        return out


class FeedForward:
    """Two dense layers with a relu between: n -> hidden -> n."""

    def __init__(self, n, hidden, rng, name="ffn", dtype=np.float64):
        self.lift = Dense(n, hidden, rng, name=f"{name}.lift", dtype=dtype)
        self.drop = Dense(hidden, n, rng, name=f"{name}.drop", dtype=dtype)

    def __call__(self, x):
        return self.drop(T.relu(self.lift(x)))

    def params(self):
        return self.lift.params() + self.drop.params()


BANK_MODES = ("per_patch", "literal")


class IglooSeq:
    """Per-step block: patch-reduction logits replace pairwise attention.

    For each step t, a patch reduction over the feature map (restricted to
    indices <= t by the plan) yields J logits; their softmax weights a value
    path built from a projection of the feature map modulated by a trainable
    bank. k blocks with independent patch filters and plans sum into one
    output, followed by a residual from the input and a feed-forward pair
    with its own residual. Output width is the projection width Z.

    Bank modes: "per_patch" stores one row per patch (shape (1, J, Z)), so
    the softmax genuinely mixes J distinct value rows. "literal" stores one
    row per step (shape (L, 1, Z)); every patch then sees the same value row
    and the softmax weights cancel - kept for comparison, not as a default.
    """

    def __init__(self, plans, n_in, n_filters, kernel_width, proj_width,
                 bank_mode, rng, ffn_hidden=0, name="seq", dtype=np.float64):
        if bank_mode not in BANK_MODES:
            raise ConfigError(f"unknown bank mode {bank_mode!r}; choose from {BANK_MODES}")
        if len(plans) < 1:
            raise ConfigError("at least one block required")
        for plan in plans:
            if not isinstance(plan, SeqPatchPlan):
                raise ConfigError("IglooSeq blocks need per-step SeqPatchPlans")
        length = plans[0].length
        n_patches = plans[0].n_patches
        self.length = length
        self.proj_width = proj_width
        self.bank_mode = bank_mode
        self.conv = CausalConv1d(n_in, n_filters, kernel_width, rng,
                                 name=f"{name}.conv", dtype=dtype)
        self.proj = Tensor(
            glorot_uniform(rng, (n_filters, proj_width), n_filters, proj_width, dtype),
            requires_grad=True,
            name=f"{name}.proj",
        )
        bank_shape = (1, n_patches, proj_width) if bank_mode == "per_patch" \
            else (length, 1, proj_width)
        self.bank = Tensor(
            small_uniform(rng, bank_shape, dtype), requires_grad=True, name=f"{name}.bank"
        )
        self.blocks = [
            PatchReducer(plan, n_filters, rng, "identity",
                         name=f"{name}.block{i}", dtype=dtype)
            for i, plan in enumerate(plans)
        ]
        self.res_proj = None
        if n_in != proj_width:
            self.res_proj = Dense(n_in, proj_width, rng, name=f"{name}.res", dtype=dtype)
        self.ffn = FeedForward(proj_width, ffn_hidden or 4 * proj_width, rng,
                               name=f"{name}.ffn", dtype=dtype)

    def __call__(self, x, training=False):
        fmap = self.conv(x)                      # (B, L, K)
        values = T.matmul(fmap, self.proj)       # (B, L, Z)
        mixed = None
        for reducer in self.blocks:
            logits = reducer(fmap)               # (B, L, J)
            weights = T.softmax(logits)
            if self.bank_mode == "per_patch":
                bank2d = T.reshape(self.bank, self.bank.data.shape[1:])  # (J, Z)
                scale = T.matmul(weights, bank2d)                        # (B, L, Z)
            else:
                # every patch row of the value tensor is identical here, so
                # the weighted average reduces to rowsum(weights) * bank[t]
                rowsum = T.sum_axes(weights, axes=(-1,), keepdims=True)  # (B, L, 1)
                bank2d = T.reshape(self.bank, (self.length, self.proj_width))
                scale = T.mul(rowsum, bank2d)                            # (B, L, Z)
            block_out = T.mul(values, scale)
            mixed = block_out if mixed is None else T.add(mixed, block_out)
        residual = self.res_proj(x) if self.res_proj is not None else x
        pre_ffn = T.add(mixed, residual)
        return T.add(pre_ffn, self.ffn(pre_ffn))

    def params(self):
        out = self.conv.params() + [self.proj, self.bank]
        for blk in self.blocks:
            out += blk.params()
        if self.res_proj is not None:
            out += self.res_proj.params()
        out += self.ffn.params()
        return out


def core_patch_params(n_patches, n_filters, patch_size):
    """Trainable scalars in one patch filter + bias: J*K*p + J."""
    return n_patches * n_filters * patch_size + n_patches


def param_count(params):
    """Exact per-tensor and total parameter counts for a parameter list."""
    per_tensor = {p.name or f"param{i}": p.data.size for i, p in enumerate(params)}
    return per_tensor, int(sum(per_tensor.values()))
