"""Kernel backend selection.

The hot inner loops (causal convolution, patch gather-reduce) exist twice:
once as numba @njit kernels and once as vectorized pure-numpy code. The
active backend is chosen at import time from the IGLOO_BACKEND environment
variable:

    IGLOO_BACKEND=numba   use the jit kernels (default when numba imports)
    IGLOO_BACKEND=numpy   force the pure-numpy path

`set_backend()` switches at runtime, which the kernel benchmark and the
parity tests use to compare both paths in one process.
"""

import os

from .errors import ConfigError

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

_VALID = ("numba", "numpy")
_backend = None


def _initial_backend():
    env = os.environ.get("IGLOO_BACKEND", "").strip().lower()
    if env and env not in _VALID:
        raise ConfigError(f"IGLOO_BACKEND must be one of {_VALID}, got {env!r}")
    if env == "numba" and not HAS_NUMBA:
        raise ConfigError("IGLOO_BACKEND=numba but numba is not importable")
    if env:
        return env
    return "numba" if HAS_NUMBA else "numpy"


def active_backend():
    """Name of the backend currently serving kernel calls."""
    global _backend
    if _backend is None:
        _backend = _initial_backend()
    return _backend


def set_backend(name):
    """Switch kernel implementations at runtime ('numba' or 'numpy')."""
    global _backend
    if name not in _VALID:
        raise ConfigError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not HAS_NUMBA:
        raise ConfigError("numba backend requested but numba is not importable")
    _backend = name
