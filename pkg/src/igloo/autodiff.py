"""Reverse-mode differentiation: tape recording, backward pass, grad checker.

A Tape is a context manager. Ops executed inside `with Tape() as tape:`
append themselves in execution order (which is a topological order), and
`tape.backward(out)` replays that list once, in reverse. Outside any tape,
ops run eagerly with no recording overhead. A tape is confined to one
thread for its lifetime; distinct tapes may run concurrently.
"""

import numpy as np

from . import tensor as T
from .errors import ShapeError, UnsupportedOpError
from .tensor import Tensor


class Tape:
    """Execution-ordered record of ops, sufficient for one backward pass."""

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        if T._active_tape[0] is not None:
            raise UnsupportedOpError("nested tapes are not supported")
        T._active_tape[0] = self
        return self

    def __exit__(self, exc_type, exc, tb):
        T._active_tape[0] = None
        return False

    def _register(self, node):
        self.nodes.append(node)

    def backward(self, output, seed=None):
        """Accumulate gradients of <seed, output> into every trainable leaf.

        Returns a dict mapping each reached leaf Tensor to its gradient
        array (also left on leaf.grad). seed defaults to ones, i.e. the
        plain gradient for a scalar output.
        """
        if not isinstance(output, Tensor):
            raise UnsupportedOpError("backward target must be a Tensor")
        if seed is None:
            seed_arr = np.ones_like(output.data)
        else:
            seed_arr = np.asarray(seed, dtype=output.data.dtype)
            if seed_arr.shape != output.data.shape:
                raise ShapeError(
                    f"seed shape {seed_arr.shape} != output shape {output.data.shape}"
                )
        leaves = {}
        for node in self.nodes:
            node.grad = None
            for p in node._parents:
                if p._backward is None and p.requires_grad:
                    p.grad = None
                    leaves.setdefault(id(p), p)
        output.grad = seed_arr.astype(output.data.dtype, copy=True)
        # reverse execution order: every node is visited exactly once, and
        # its gradient is complete before its own backward rule fires
        for node in reversed(self.nodes):
            if node.grad is None:
                continue  # not on a path to the output
            node._backward(node.grad)
        return {leaf: leaf.grad for leaf in leaves.values() if leaf.grad is not None}


def forward(fn, *inputs):
    """Run `fn(*inputs)` under a fresh tape; returns (output, tape)."""
    tape = Tape()
    with tape:
        out = fn(*inputs)
    if not isinstance(out, Tensor):
        raise UnsupportedOpError("forward function must return a Tensor")
    return out, tape


def _rel_err(a, n):
    return abs(a - n) / max(abs(a), abs(n), 1e-8)


class GradCheckEntry:
    """Finite-difference comparison result for one parameter tensor."""

    def __init__(self, name, shape, max_rel_err, max_abs_grad, n_probes, ok):
        self.name = name
        self.shape = shape
        self.max_rel_err = max_rel_err
        self.max_abs_grad = max_abs_grad
        self.n_probes = n_probes
        self.ok = ok

    @property
    def degenerate(self):
        """No gradient signal reaches this parameter (analytic grad ~ 0)."""
        return self.max_abs_grad < 1e-12


class GradCheckReport:
    def __init__(self, entries, tol):
        self.entries = entries
        self.tol = tol

    @property
    def ok(self):
        return all(e.ok for e in self.entries)

    @property
    def max_rel_err(self):
        return max((e.max_rel_err for e in self.entries), default=0.0)

    def lines(self):
        rows = [f"{'parameter':<24} {'shape':<16} {'max_rel_err':>12} {'max|grad|':>12}  status"]
        for e in self.entries:
            status = "PASS" if e.ok else "FAIL"
            if e.ok and e.degenerate:
                status = "PASS (degenerate: no gradient signal)"
            rows.append(
                f"{e.name:<24} {str(e.shape):<16} {e.max_rel_err:>12.3e} "
                f"{e.max_abs_grad:>12.3e}  {status}"
            )
        return rows


def grad_check(loss_fn, params, h=1e-5, tol=1e-4, max_probes=None, seed=0,
               atol=1e-8):
    """Compare analytic gradients of a scalar loss against central differences.

    loss_fn: zero-argument callable reading `params` and returning a scalar
    Tensor. It must be deterministic (run models with dropout disabled).
    Probes every entry of each parameter, or a seeded random sample of
    `max_probes` entries for large tensors. Relative error per probe is
    |a - n| / max(|a|, |n|, 1e-8); probes where |a - n| <= atol count as
    exact agreement, so parameters whose gradient is genuinely ~0 (see
    GradCheckEntry.degenerate) are not failed on finite-difference noise.
    """
    out, tape = forward(loss_fn)
    if out.data.shape != ():
        raise ShapeError(f"grad_check needs a scalar loss, got shape {out.data.shape}")
    tape.backward(out)
    rng = np.random.default_rng(seed)
    entries = []
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        n_entries = flat.size
        if max_probes is not None and n_entries > max_probes:
            probe_idx = rng.choice(n_entries, size=max_probes, replace=False)
        else:
            probe_idx = np.arange(n_entries)
        worst = 0.0
        for i in probe_idx:
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn().item()
            flat[i] = orig - h
            down = loss_fn().item()
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            a = float(analytic.reshape(-1)[i])
            if abs(a - numeric) > atol:
                worst = max(worst, _rel_err(a, numeric))
        entries.append(
            GradCheckEntry(
                name=p.name or f"param{len(entries)}",
                shape=p.data.shape,
                max_rel_err=worst,
                max_abs_grad=float(np.abs(analytic).max()) if analytic.size else 0.0,
                n_probes=len(probe_idx),
                ok=worst < tol,
            )
        )
    return GradCheckReport(entries, tol)
