"""Patch placement: which time indices each of the J patches gathers.

Plans are generated once when a model is built and frozen afterwards; they
serialize into checkpoints so a saved model reloads exactly. Generation is
a pure function of (strategy, L, J, p, sigma, seed) using numpy's PCG64,
so plans are bit-identical across runs and platforms.

Two kinds exist: a whole-sequence plan (one (J, p) index array, used when a
single representation of the sequence is produced) and a per-step causal
plan (an (L, J, p) array whose step-t entry only uses indices <= t, used by
the per-step sequence block).
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

RANDOM = "random"
DETERMINISTIC = "deterministic"
GAUSSIAN = "gaussian"


def _validate_dims(length, n_patches, patch_size):
    if length < 1:
        raise ConfigError(f"sequence length must be >= 1, got {length}")
    if n_patches < 1:
        raise ConfigError(f"patch count must be >= 1, got {n_patches}")
    if patch_size < 1:
        raise ConfigError(f"patch size must be >= 1, got {patch_size}")


@dataclass(eq=False, frozen=True)
class PatchPlan:
    """J groups of p time indices over a length-L sequence."""

    length: int
    n_patches: int
    patch_size: int
    locations: np.ndarray = field(repr=False)  # (J, p) int64
    strategy: str = RANDOM
    seed: int = 0
    causal: bool = False

    def __post_init__(self):
        assert self.locations.shape == (self.n_patches, self.patch_size)
        self.locations.setflags(write=False)


@dataclass(eq=False, frozen=True)
class SeqPatchPlan:
    """Per-step plans: entry t gathers only indices in [0, t]."""

    length: int
    n_patches: int
    patch_size: int
    locations: np.ndarray = field(repr=False)  # (L, J, p) int64
    sigma: float = 1.0
    strategy: str = GAUSSIAN
    seed: int = 0
    causal: bool = True

    def __post_init__(self):
        assert self.locations.shape == (self.length, self.n_patches, self.patch_size)
        self.locations.setflags(write=False)

    def plan_for_step(self, t):
        return self.locations[t]


def make_random_plan(length, n_patches, patch_size, seed):
    """Indices i.i.d. uniform over [0, L); deterministic given seed."""
    _validate_dims(length, n_patches, patch_size)
    if patch_size > length:
        raise ConfigError(
            f"patch size {patch_size} exceeds sequence length {length}"
        )
    rng = np.random.default_rng(seed)
    locations = rng.integers(0, length, size=(n_patches, patch_size), dtype=np.int64)
    return PatchPlan(length, n_patches, patch_size, locations, RANDOM, int(seed))


def make_deterministic_plan(length, n_patches, patch_size):
    """Patches on an even stride grid: slot (j, i) gets floor((j*p+i)*L/(J*p)).

    Covers [0, L) whenever J*p >= L.
    """
    _validate_dims(length, n_patches, patch_size)
    total = n_patches * patch_size
    locations = (np.arange(total, dtype=np.int64) * length // total).reshape(
        n_patches, patch_size
    )
    return PatchPlan(length, n_patches, patch_size, locations, DETERMINISTIC, 0)


def make_causal_seq_plan(length, n_patches, patch_size, sigma, seed):
    """Per-step plans concentrated just below each step index.

    Index = round(t - |N(0, sigma)|) clamped to [0, t]: a half-normal offset
    into the past, so recent steps dominate and step 0 is all zeros. Sampled
    with replacement.
    """
    _validate_dims(length, n_patches, patch_size)
    if sigma <= 0:
        raise ConfigError(f"sigma must be positive, got {sigma}")
    rng = np.random.default_rng(seed)
    steps = np.arange(length, dtype=np.int64)[:, None, None]
    offsets = np.abs(rng.normal(0.0, sigma, size=(length, n_patches, patch_size)))
    locations = np.rint(steps - offsets).astype(np.int64)
    np.clip(locations, 0, steps, out=locations)
    return SeqPatchPlan(
        length, n_patches, patch_size, locations, float(sigma), GAUSSIAN, int(seed)
    )
