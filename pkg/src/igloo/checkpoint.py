"""Binary checkpoints: magic "IGLO", version, config, plans, tensors.

Layout (all integers little-endian):

    magic            4 bytes  b"IGLO"
    version          u32      format version, currently 1
    vocab_size       u32      0 when the task has no corpus vocabulary
    config_len       u64      byte length of the UTF-8 config echo
    config           bytes    resolved key=value text
    n_plans          u32
    per plan:
        kind         u8       0 whole-sequence, 1 per-step
        strategy     u32+utf8
        length       u32
        n_patches    u32
        patch_size   u32
        causal       u8
        seed         i64      -1 when the plan used no RNG
        sigma        f64      0 for non-gaussian strategies
        loc_rank     u32
        loc_dims     u32 each
        locations    i64 payload
    n_params         u32
    per tensor:
        name         u32+utf8
        rank         u32
        dims         u32 each
        payload      f64
    has_opt_state    u8
    if 1: n_arrays u32, then named arrays as above (f64 payloads)

Loading refuses any magic or version mismatch. Saving the arrays a load
returned reproduces the file byte for byte.
"""

import io
import struct

import numpy as np

from .errors import FormatError
from .patch_plan import PatchPlan, SeqPatchPlan

MAGIC = b"IGLO"
VERSION = 1


def _w_u32(fh, value):
    fh.write(struct.pack("<I", value))


def _w_i64(fh, value):
    fh.write(struct.pack("<q", value))


def _w_f64(fh, value):
    fh.write(struct.pack("<d", value))


def _w_text(fh, text):
    payload = text.encode("utf-8")
    _w_u32(fh, len(payload))
    fh.write(payload)


def _w_array(fh, arr, dtype):
    _w_u32(fh, arr.ndim)
    for dim in arr.shape:
        _w_u32(fh, dim)
    fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def _r_exact(fh, count, what):
    buf = fh.read(count)
    if len(buf) != count:
        raise FormatError(f"checkpoint truncated while reading {what}")
    return buf


def _r_u32(fh, what="u32"):
    return struct.unpack("<I", _r_exact(fh, 4, what))[0]


def _r_i64(fh, what="i64"):
    return struct.unpack("<q", _r_exact(fh, 8, what))[0]


def _r_f64(fh, what="f64"):
    return struct.unpack("<d", _r_exact(fh, 8, what))[0]


def _r_text(fh, what="text"):
    n = _r_u32(fh, what)
    return _r_exact(fh, n, what).decode("utf-8")


def _r_array(fh, dtype, what):
    rank = _r_u32(fh, what)
    dims = [_r_u32(fh, what) for _ in range(rank)]
    count = int(np.prod(dims)) if dims else 1
    itemsize = np.dtype(dtype).itemsize
    payload = _r_exact(fh, count * itemsize, what)
    return np.frombuffer(payload, dtype=dtype).reshape(dims).copy()


def _write_plan(fh, plan):
    seq = isinstance(plan, SeqPatchPlan)
    fh.write(bytes([1 if seq else 0]))
    _w_text(fh, plan.strategy)
    _w_u32(fh, plan.length)
    _w_u32(fh, plan.n_patches)
    _w_u32(fh, plan.patch_size)
    fh.write(bytes([1 if plan.causal else 0]))
    _w_i64(fh, -1 if plan.seed is None else plan.seed)
    _w_f64(fh, plan.sigma if seq else 0.0)
    _w_array(fh, plan.locations, "<i8")


def _read_plan(fh):
    kind = _r_exact(fh, 1, "plan kind")[0]
    strategy = _r_text(fh, "plan strategy")
    length = _r_u32(fh, "plan length")
    n_patches = _r_u32(fh, "plan n_patches")
    patch_size = _r_u32(fh, "plan patch_size")
    causal = bool(_r_exact(fh, 1, "plan causal")[0])
    seed = _r_i64(fh, "plan seed")
    seed = None if seed == -1 else seed
    sigma = _r_f64(fh, "plan sigma")
    locations = _r_array(fh, "<i8", "plan locations")
    if kind == 1:
        return SeqPatchPlan(length=length, n_patches=n_patches,
                            patch_size=patch_size, locations=locations,
                            sigma=sigma, strategy=strategy, seed=seed,
                            causal=causal)
    return PatchPlan(length=length, n_patches=n_patches, patch_size=patch_size,
                     locations=locations, strategy=strategy, seed=seed,
                     causal=causal)


def save_checkpoint(path, config_text, plans, named_params, opt_state=None,
                    vocab_size=0):
    """Write a checkpoint; named_params is an ordered [(name, array)] list."""
    fh = io.BytesIO()
    fh.write(MAGIC)
    _w_u32(fh, VERSION)
    _w_u32(fh, vocab_size)
    payload = config_text.encode("utf-8")
    fh.write(struct.pack("<Q", len(payload)))
    fh.write(payload)
    _w_u32(fh, len(plans))
    for plan in plans:
        _write_plan(fh, plan)
    _w_u32(fh, len(named_params))
    for name, arr in named_params:
        _w_text(fh, name)
        _w_array(fh, arr, "<f8")
    if opt_state is None:
        fh.write(b"\x00")
    else:
        fh.write(b"\x01")
        _w_u32(fh, len(opt_state))
        for name, arr in opt_state.items():
            _w_text(fh, name)
            _w_array(fh, np.asarray(arr, dtype=np.float64), "<f8")
    blob = fh.getvalue()
    with open(path, "wb") as out:
        out.write(blob)
    return blob


def load_checkpoint(path):
    """Read a checkpoint; returns (config_text, plans, named_params, opt_state, vocab_size)."""
    with open(path, "rb") as fh:
        magic = _r_exact(fh, 4, "magic")
        if magic != MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        version = _r_u32(fh, "version")
        if version != VERSION:
            raise FormatError(
                f"{path}: format version {version} not supported (expected {VERSION})")
        vocab_size = _r_u32(fh, "vocab size")
        config_len = struct.unpack("<Q", _r_exact(fh, 8, "config length"))[0]
        config_text = _r_exact(fh, config_len, "config").decode("utf-8")
        plans = [_read_plan(fh) for _ in range(_r_u32(fh, "plan count"))]
        named_params = []
        for _ in range(_r_u32(fh, "param count")):
            name = _r_text(fh, "param name")
            named_params.append((name, _r_array(fh, "<f8", name)))
        opt_state = None
        if _r_exact(fh, 1, "optimizer flag")[0]:
            opt_state = {}
            for _ in range(_r_u32(fh, "optimizer array count")):
                name = _r_text(fh, "optimizer array name")
                opt_state[name] = _r_array(fh, "<f8", name)
        trailing = fh.read(1)
    if trailing:
        raise FormatError(f"{path}: trailing bytes after checkpoint payload")
    return config_text, plans, named_params, opt_state, vocab_size


def checkpoint_model(path, cfg_text, model, opt=None, vocab_size=0):
    """Convenience wrapper: serialize a model's plans and parameters."""
    named = [(p.name, p.data) for p in model.params()]
    state = opt.state_arrays() if opt is not None else None
    return save_checkpoint(path, cfg_text, model.plans(), named, state,
                           vocab_size=vocab_size)


def restore_model(path):
    """Rebuild the model a checkpoint describes and load its state.

    Returns (model, cfg, opt_state, vocab_size). The embedded config echo
    fixes the architecture; plans and parameters are overwritten with the
    stored values, so the result is exactly the saved model.
    """
    from .config import resolve
    from .models import build_model

    cfg_text, plans, named_params, opt_state, vocab_size = load_checkpoint(path)
    cfg = resolve(file_text=cfg_text, source=path)
    model = build_model(cfg, vocab_size=vocab_size or None)
    model.set_plans(plans)
    stored = dict(named_params)
    for p in model.params():
        if p.name not in stored:
            raise FormatError(f"{path}: checkpoint lacks parameter {p.name!r}")
        arr = stored[p.name]
        if arr.shape != p.data.shape:
            raise FormatError(
                f"{path}: parameter {p.name!r} has shape {arr.shape}, "
                f"model expects {p.data.shape}")
        p.data = arr.astype(p.data.dtype)
    return model, cfg, opt_state, vocab_size
