"""Sequence modeling from gathered patches instead of recurrence or attention.

A causal convolution turns the input into a feature map; trainable filters
reduce a fixed set of gathered patches to a representation whose parameter
count does not grow with sequence length. Includes a tape-based autodiff
core, numba-accelerated kernels with a pure numpy fallback, task data
generators, an Adam trainer, and a CLI.
"""

from . import tensor
from .autodiff import Tape, forward, grad_check
from .backend import active_backend, set_backend
from .checkpoint import (
    checkpoint_model,
    load_checkpoint,
    restore_model,
    save_checkpoint,
)
from .config import DEFAULTS, echo, resolve
from .errors import (
    ConfigError,
    DataError,
    FormatError,
    IglooError,
    NumericsError,
    ShapeError,
    UnsupportedOpError,
)
from .layers import (
    CausalConv1d,
    Dense,
    FeedForward,
    IglooBase,
    IglooSeq,
    IglooStack,
    PatchReducer,
    core_patch_params,
    param_count,
)
from .models import (
    AdditionModel,
    CharLmModel,
    CopyModel,
    DigitsModel,
    build_model,
)
from .patch_plan import (
    PatchPlan,
    SeqPatchPlan,
    make_causal_seq_plan,
    make_deterministic_plan,
    make_random_plan,
)
from .rng import stream_rng, stream_seed
from .tasks import (
    apply_permutation,
    gen_addition,
    gen_char_corpus,
    gen_copy_memory,
    gen_digits_idx,
    load_char_corpus,
    load_mnist_idx,
    one_hot,
)
from .tensor import Tensor
from .train import Adam, RunMetrics, bench, evaluate, load_task_data, train

__version__ = "0.1.0"
