"""Deterministic tensor arithmetic, seeded randomness, and reverse-mode autodiff.

Everything downstream (paths, models, training, diagnostics) builds on three
pieces defined here:

* :class:`Tensor` -- an immutable-by-convention wrapper around a row-major
  float64 numpy buffer.
* :class:`RandomStream` -- a counter-based splitmix64 generator with Gaussian
  draws strictly via Box-Muller, so alternate-language ports can reproduce
  streams bit-exactly from the documented constants below.
* :class:`Tape` / :func:`backward` -- a recorded operation tape giving
  reverse-mode gradients of scalar losses with respect to parameter leaves.

Reductions use numpy's deterministic pairwise summation: for a fixed shape and
dtype the floating-point evaluation order is fixed, so results are bit-stable
across runs.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "RandomStream",
    "backward",
    "grad_check",
    "sample_standard_normal",
]


class Tensor:
    """Shape plus a row-major float buffer; treated as immutable once built.

    ``requires_grad`` marks a parameter leaf for :func:`backward`. Tensors are
    safe to share across threads; only tape recording is single-threaded.
    """

    __slots__ = ("data", "requires_grad")

    def __init__(self, data, requires_grad: bool = False, dtype=np.float64):
        arr = np.asarray(data, dtype=dtype)
        self.data = arr
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of size {self.data.size}")
        return float(self.data.reshape(()))

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad,
                      dtype=self.data.dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


class TapeRecord:
    """One recorded primitive: inputs, output, its vjp, and a replay closure."""

    __slots__ = ("name", "inputs", "output", "vjp", "forward")

    def __init__(self, name, inputs, output, vjp, forward):
        self.name = name
        self.inputs = inputs
        self.output = output
        self.vjp = vjp
        self.forward = forward


class Tape:
    """Ordered record of primitive operations executed while the tape is active.

    Records are appended in execution order, which is a valid topological
    order; the backward pass therefore visits each node exactly once by
    walking it in reverse. Use as a context manager::

        with Tape() as tape:
            loss = ...   # ops on tensors record themselves
        grads = backward(tape, loss, leaves=params)
    """

    def __init__(self):
        self.records: list[TapeRecord] = []
        self._tracked: set[int] = set()

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _TAPE_STACK.pop()
        assert popped is self, "tape stack corrupted"

    def watch(self, t: Tensor) -> None:
        self._tracked.add(id(t))

    def is_tracked(self, t: Tensor) -> bool:
        return t.requires_grad or id(t) in self._tracked

    def replay(self) -> bool:
        """Re-execute every record; True iff all outputs reproduce bit-exactly."""
        for rec in self.records:
            fresh = rec.forward()
            if fresh.shape != rec.output.data.shape:
                return False
            if not np.array_equal(fresh, rec.output.data):
                return False
        return True


_TAPE_STACK: list[Tape] = []


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _record(name, inputs, out_data, vjp, forward) -> Tensor:
    out = Tensor(out_data, dtype=out_data.dtype)
    tape = _active_tape()
    if tape is not None and any(tape.is_tracked(t) for t in inputs):
        tape.records.append(TapeRecord(name, tuple(inputs), out, vjp, forward))
        tape.watch(out)
    return out


# ---------------------------------------------------------------------------
# Primitive operations. Each returns a new Tensor and, when a tape is active
# and an input is tracked, records a vjp closure mapping the output adjoint to
# per-input adjoints (None for inputs that need no gradient).
# ---------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise a + b; also supports (B, D) + (D,) bias broadcasting."""
    if a.shape == b.shape:
        vjp = lambda g: (g, g)
    elif a.data.ndim == 2 and b.data.ndim == 1 and a.shape[1] == b.shape[0]:
        vjp = lambda g: (g, g.sum(axis=0))
    else:
        raise ValueError(f"add: incompatible shapes {a.shape} and {b.shape}")
    return _record("add", (a, b), a.data + b.data, vjp,
                   lambda: a.data + b.data)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"sub: shape mismatch {a.shape} vs {b.shape}")
    return _record("sub", (a, b), a.data - b.data,
                   lambda g: (g, -g), lambda: a.data - b.data)


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ValueError(f"mul: shape mismatch {a.shape} vs {b.shape}")
    return _record("mul", (a, b), a.data * b.data,
                   lambda g: (g * b.data, g * a.data),
                   lambda: a.data * b.data)


def scale(a: Tensor, s: float) -> Tensor:
    s = float(s)
    return _record("scale", (a,), a.data * s,
                   lambda g: (g * s,), lambda: a.data * s)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError("matmul expects 2-D operands")
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dims {a.shape} @ {b.shape}")
    return _record("matmul", (a, b), a.data @ b.data,
                   lambda g: (g @ b.data.T, a.data.T @ g),
                   lambda: a.data @ b.data)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(a: Tensor) -> Tensor:
    """x * sigmoid(x), the smooth default activation."""
    s = _sigmoid(a.data)
    return _record("silu", (a,), a.data * s,
                   lambda g: (g * (s * (1.0 + a.data * (1.0 - s))),),
                   lambda: a.data * _sigmoid(a.data))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _record("tanh", (a,), y,
                   lambda g: (g * (1.0 - y * y),),
                   lambda: np.tanh(a.data))


def sum_all(a: Tensor) -> Tensor:
    return _record("sum_all", (a,), np.asarray(a.data.sum()),
                   lambda g: (np.broadcast_to(g, a.shape).copy(),),
                   lambda: np.asarray(a.data.sum()))


def mean_all(a: Tensor) -> Tensor:
    n = a.data.size
    return _record("mean_all", (a,), np.asarray(a.data.mean()),
                   lambda g: (np.broadcast_to(g / n, a.shape).copy(),),
                   lambda: np.asarray(a.data.mean()))


def backward(tape: Tape, output: Tensor,
             leaves: Sequence[Tensor] | None = None):
    """Reverse-mode gradients of a scalar ``output`` recorded on ``tape``.

    Walks the records in reverse execution order (reverse topological order),
    visiting each node once. Returns gradients aligned with ``leaves``; leaves
    the output never touched get zeros. With ``leaves=None`` returns a dict
    keyed by tensor id for every parameter leaf encountered on the tape.
    """
    if output.data.size != 1:
        raise ValueError(f"backward needs a scalar output, got shape {output.shape}")

    adjoint: dict[int, np.ndarray] = {
        id(output): np.ones_like(output.data)
    }
    leaf_grads: dict[int, np.ndarray] = {}
    for rec in reversed(tape.records):
        g = adjoint.pop(id(rec.output), None)
        if g is None:
            continue
        grads = rec.vjp(g)
        for inp, gi in zip(rec.inputs, grads):
            if gi is None:
                continue
            if inp.requires_grad:
                acc = leaf_grads.get(id(inp))
                leaf_grads[id(inp)] = gi if acc is None else acc + gi
            if id(inp) in tape._tracked:
                acc = adjoint.get(id(inp))
                adjoint[id(inp)] = gi if acc is None else acc + gi

    if leaves is None:
        return leaf_grads
    return [leaf_grads.get(id(p), np.zeros_like(p.data)) for p in leaves]


def grad_check(fn: Callable[[], Tensor], params: Sequence[Tensor],
               h: float = 1e-5) -> float:
    """Max relative error between tape gradients and central finite differences.

    ``fn`` must re-evaluate the scalar objective from the current contents of
    ``params`` on every call. Each parameter is probed along a deterministic
    unit direction (the probe for a size-1 parameter is the entry itself, so
    scalars get a plain per-entry check): the tape-side value is
    ``<grad, probe>`` and the difference side ``(f(p + h*probe) -
    f(p - h*probe)) / (2h)``. Per parameter the relative error is
    ``|ad - fd| / max(|ad|, |fd|, 1e-12)``; returns the max over parameters
    (0.0 for an empty parameter list).

    Probing a direction instead of every entry keeps the subtraction noise of
    the two objective evaluations small relative to the compared derivative,
    which per-entry differencing cannot guarantee for the smallest gradient
    entries of large parameter blocks.
    """
    with Tape() as tape:
        out = fn()
    ad_grads = backward(tape, out, leaves=list(params))

    max_err = 0.0
    for idx, (p, ad) in enumerate(zip(params, ad_grads)):
        probe_stream = RandomStream(0xC0FFEE + idx)
        probe = probe_stream.normal(p.data.shape if p.data.ndim else (1,))
        probe = probe.reshape(p.data.shape)
        norm = float(np.sqrt((probe * probe).sum()))
        probe = probe / norm
        ad_dir = float((np.asarray(ad) * probe).sum())

        original = p.data
        p.data = original + h * probe
        f_plus = fn().item()
        p.data = original - h * probe
        f_minus = fn().item()
        p.data = original
        fd_dir = (f_plus - f_minus) / (2.0 * h)
        err = abs(ad_dir - fd_dir) / max(abs(ad_dir), abs(fd_dir), 1e-12)
        if err > max_err:
            max_err = err
    return max_err


# ---------------------------------------------------------------------------
# Seeded randomness.
# ---------------------------------------------------------------------------

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_MASK = 0xFFFFFFFFFFFFFFFF


def _mix64(z: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer (Steele/Lea/Flood): xor-shift-multiply mixing."""
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class RandomStream:
    """Counter-based splitmix64 generator with a 64-bit state.

    The k-th raw output (k = 0, 1, ...) is ``mix64(seed + (k+1) * GOLDEN)``
    with GOLDEN = 0x9E3779B97F4A7C15 and mix64 the xor-shift-multiply
    finalizer with constants 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB and
    shifts 30/27/31. Uniform doubles take the top 53 bits:
    ``u = (raw >> 11) * 2**-53`` in [0, 1).

    Gaussian draws use Box-Muller strictly: the j-th pair of uniforms
    ``(u1, u2)`` yields ``r = sqrt(-2 log(1 - u1))``, ``theta = 2 pi u2``,
    ``z[2j] = r cos(theta)``, ``z[2j+1] = r sin(theta)``. For an odd draw
    count the final sine value is discarded (the pair of uniforms is still
    consumed). Identical seeds give identical sequences on every platform.
    """

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & _U64_MASK
        self.counter = int(counter)

    def raw(self, n: int) -> np.ndarray:
        """Next ``n`` raw 64-bit outputs; advances the counter by ``n``."""
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            return _mix64(np.uint64(self.seed) + idx * _GOLDEN)

    def uniform(self, n: int) -> np.ndarray:
        """``n`` doubles uniform on [0, 1)."""
        return (self.raw(n) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53

    def uniform_open(self, n: int) -> np.ndarray:
        """``n`` doubles uniform on the open interval (0, 1).

        Draws from [0, 1) and redraws any exact zeros (probability 2**-53
        each), keeping endpoint values out of the stream.
        """
        u = self.uniform(n)
        bad = np.flatnonzero(u == 0.0)
        while bad.size:
            u[bad] = self.uniform(bad.size)
            bad = bad[u[bad] == 0.0]
        return u

    def normal(self, shape) -> np.ndarray:
        """i.i.d. standard normal draws of the given shape via Box-Muller."""
        shape = _checked_shape(shape)
        n = 1
        for s in shape:
            n *= s
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        theta = (2.0 * math.pi) * u[1::2]
        z = np.empty(2 * pairs, dtype=np.float64)
        z[0::2] = r * np.cos(theta)
        z[1::2] = r * np.sin(theta)
        return z[:n].reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        """Fisher-Yates permutation of range(n); j = floor(u * (i+1))."""
        perm = np.arange(n)
        if n > 1:
            u = self.uniform(n - 1)
            for i in range(n - 1, 0, -1):
                j = int(u[n - 1 - i] * (i + 1))
                perm[i], perm[j] = perm[j], perm[i]
        return perm

    def child(self, index: int) -> "RandomStream":
        """Independent derived stream: seed = mix64(seed XOR mix64((index+1)*GOLDEN))."""
        with np.errstate(over="ignore"):
            tag = _mix64(np.uint64((int(index) + 1) & _U64_MASK) * _GOLDEN)
            derived = _mix64(np.uint64(self.seed) ^ tag)
        return RandomStream(int(derived))


def _checked_shape(shape) -> tuple[int, ...]:
    shape = tuple(int(s) for s in shape)
    if len(shape) == 0:
        raise ValueError("shape must be non-empty")
    if any(s <= 0 for s in shape):
        raise ValueError(f"shape extents must be positive, got {shape}")
    return shape


def sample_standard_normal(stream: RandomStream, shape) -> Tensor:
    """Tensor of i.i.d. N(0, 1) draws; deterministic given the stream state."""
    return Tensor(stream.normal(shape))
