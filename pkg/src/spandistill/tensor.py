"""Dense float64 tensors with reverse-mode automatic differentiation.

Everything runs on numpy storage, but no BLAS reduction is ever used:
every sum (matmul contractions, axis sums, softmax denominators, norms,
standard deviations) accumulates left-to-right along the reduced axis.
Multi-axis and global sums reduce the trailing axis first, then proceed
toward axis 0. That order is the fixed summation order of this engine:
a straightforward scalar loop that follows the same order reproduces
every forward value bit-for-bit in 64-bit arithmetic.

Gradients are recorded onto an explicit Tape. Recording happens only
while a tape is active and at least one operand has requires_grad=True;
outside any tape every output is a constant. Backward walks the tape in
exact reverse execution order and populates .grad on the requires_grad
leaves (tensors the tape did not itself produce).
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "Tape",
    "ShapeError",
    "TapeError",
    "tensor",
    "concat",
    "finite_diff_check",
]


class ShapeError(ValueError):
    """Operand shapes are incompatible; message reports both shapes."""


class TapeError(RuntimeError):
    """Tape misuse: backward on an empty/consumed tape, non-scalar loss."""


_state = threading.local()


def _active_tape():
    stack = getattr(_state, "tapes", None)
    return stack[-1] if stack else None


class _Node:
    __slots__ = ("inputs", "output", "grad_fn")

    def __init__(self, inputs, output, grad_fn):
        self.inputs = inputs
        self.output = output
        self.grad_fn = grad_fn


class Tape:
    """Ordered record of executed operations (define-by-run).

    Use as a context manager; ops executed inside record themselves when
    any input requires grad. One backward() per tape unless reset().
    """

    def __init__(self):
        self.nodes: list[_Node] = []
        self._consumed = False

    def __enter__(self):
        stack = getattr(_state, "tapes", None)
        if stack is None:
            stack = _state.tapes = []
        stack.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _state.tapes.pop()
        return False

    def record(self, inputs, output, grad_fn):
        self.nodes.append(_Node(inputs, output, grad_fn))

    def reset(self):
        """Re-arm backward(). Recorded nodes are kept; leaf grads are kept
        and keep accumulating (clear them via the optimizer or zero_grad)."""
        self._consumed = False

    def backward(self, loss: "Tensor"):
        """Populate .grad on every requires_grad leaf reachable from loss."""
        if self._consumed:
            raise TapeError("backward already ran on this tape; call reset() first")
        if not self.nodes:
            raise TapeError("backward on an empty tape")
        if loss.data.ndim != 0:
            raise TapeError(f"loss must be scalar, got shape {loss.data.shape}")
        self._consumed = True

        produced = {id(n.output) for n in self.nodes}
        grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=np.float64)}
        for node in reversed(self.nodes):
            g_out = grads.pop(id(node.output), None)
            if g_out is None:
                continue
            for inp, g in zip(node.inputs, node.grad_fn(g_out)):
                if g is None or not inp.requires_grad:
                    continue
                key = id(inp)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
                if key not in produced:
                    if inp.grad is None:
                        inp.grad = np.zeros_like(inp.data)
                    inp.grad = inp.grad + g


class Tensor:
    """Dense float64 value, optionally participating in the active tape."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.data.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}{flag})"

    # arithmetic
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)

    # method aliases for the functional ops
    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sqrt(self):
        return sqrt(self)

    def tanh(self):
        return tanh(self)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def std(self, axis=-1, keepdims=False):
        return std(self, axis, keepdims)

    def norm(self, axis=-1, keepdims=False):
        return norm(self, axis, keepdims)

    def softmax(self, axis=-1):
        return softmax(self, axis)

    def log_softmax(self, axis=-1):
        return log_softmax(self, axis)

    def transpose(self, axes=None):
        return transpose(self, axes)

    def reshape(self, shape):
        return reshape(self, shape)

    def broadcast_to(self, shape):
        return broadcast_to(self, shape)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad)


def _coerce(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, inputs: Sequence[Tensor], grad_fn) -> Tensor:
    """Wrap an op result; record to the active tape when grads are needed."""
    tape = _active_tape()
    needs = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs)
    if needs:
        tape.record(tuple(inputs), out, grad_fn)
    return out


# ---------------------------------------------------------------------------
# fixed-order reduction helpers (plain numpy, used by forwards and backwards)


def _ordered_sum_axis(a: np.ndarray, axis: int) -> np.ndarray:
    """Left-to-right accumulation along one axis."""
    a = np.moveaxis(a, axis, 0)
    if a.shape[0] == 0:
        raise ShapeError("cannot reduce an empty axis")
    out = np.array(a[0], dtype=np.float64, copy=True)
    for k in range(1, a.shape[0]):
        out += a[k]
    return out


def _ordered_sum(a: np.ndarray, axis=None, keepdims: bool = False) -> np.ndarray:
    """Fixed-order sum: trailing axis first when axis is None."""
    if axis is None:
        out = a
        while out.ndim > 0:
            out = _ordered_sum_axis(out, out.ndim - 1)
        if keepdims:
            out = out.reshape((1,) * a.ndim)
        return out
    ax = axis % a.ndim
    out = _ordered_sum_axis(a, ax)
    if keepdims:
        out = np.expand_dims(out, ax)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum g down to `shape` (reverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = _ordered_sum_axis(g, 0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = _ordered_sum(g, axis=i, keepdims=True)
    return g.reshape(shape)


def _raw_matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Batched matmul with left-to-right accumulation over the contraction."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} vs {b.shape}")
    try:
        lead = np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul batch dimensions differ: {a.shape} vs {b.shape}")
    out = np.zeros(lead + (a.shape[-2], b.shape[-1]), dtype=np.float64)
    buf = np.empty_like(out)
    for k in range(a.shape[-1]):
        np.multiply(a[..., :, k : k + 1], b[..., k : k + 1, :], out=buf)
        out += buf
    return out


def _swap_last(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


# ---------------------------------------------------------------------------
# primitives


def _broadcast_check(a: Tensor, b: Tensor, opname: str):
    try:
        np.broadcast_shapes(a.data.shape, b.data.shape)
    except ValueError:
        raise ShapeError(f"{opname}: shapes {a.data.shape} and {b.data.shape} do not broadcast")


def add(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _broadcast_check(a, b, "add")
    out = a.data + b.data

    def grad_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _make(out, (a, b), grad_fn)


def sub(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _broadcast_check(a, b, "sub")
    out = a.data - b.data

    def grad_fn(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return _make(out, (a, b), grad_fn)


def mul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _broadcast_check(a, b, "mul")
    out = a.data * b.data

    def grad_fn(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _make(out, (a, b), grad_fn)


def div(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    _broadcast_check(a, b, "div")
    if np.any(b.data == 0.0):
        raise ValueError("div: denominator contains zero")
    out = a.data / b.data

    def grad_fn(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return _make(out, (a, b), grad_fn)


def neg(a) -> Tensor:
    a = _coerce(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def exp(a) -> Tensor:
    a = _coerce(a)
    out = np.exp(a.data)

    def grad_fn(g):
        return (g * out,)

    return _make(out, (a,), grad_fn)


def log(a) -> Tensor:
    a = _coerce(a)
    if np.any(a.data <= 0.0):
        raise ValueError("log: operand must be strictly positive")
    out = np.log(a.data)

    def grad_fn(g):
        return (g / a.data,)

    return _make(out, (a,), grad_fn)


def sqrt(a) -> Tensor:
    a = _coerce(a)
    if np.any(a.data < 0.0):
        raise ValueError("sqrt: operand must be non-negative")
    out = np.sqrt(a.data)

    def grad_fn(g):
        # precondition for gradients: operand strictly positive
        return (g / (2.0 * out),)

    return _make(out, (a,), grad_fn)


def tanh(a) -> Tensor:
    a = _coerce(a)
    out = np.tanh(a.data)

    def grad_fn(g):
        return (g * (1.0 - out * out),)

    return _make(out, (a,), grad_fn)


def matmul(a, b) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    out = _raw_matmul(a.data, b.data)

    def grad_fn(g):
        ga = _unbroadcast(_raw_matmul(g, _swap_last(b.data)), a.data.shape)
        gb = _unbroadcast(_raw_matmul(_swap_last(a.data), g), b.data.shape)
        return ga, gb

    return _make(out, (a, b), grad_fn)


def transpose(a, axes=None) -> Tensor:
    """Permute axes; default swaps the last two."""
    a = _coerce(a)
    if axes is None:
        if a.data.ndim < 2:
            raise ShapeError(f"transpose needs >=2-d operand, got {a.data.shape}")
        out = _swap_last(a.data)
        return _make(out.copy(), (a,), lambda g: (_swap_last(g),))
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    out = np.transpose(a.data, axes)
    return _make(out.copy(), (a,), lambda g: (np.transpose(g, inv),))


def reshape(a, shape) -> Tensor:
    a = _coerce(a)
    shape = tuple(shape)
    out = a.data.reshape(shape)
    return _make(out.copy(), (a,), lambda g: (g.reshape(a.data.shape),))


def broadcast_to(a, shape) -> Tensor:
    a = _coerce(a)
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError(f"broadcast: cannot broadcast {a.data.shape} to {shape}")
    return _make(out.copy(), (a,), lambda g: (_unbroadcast(g, a.data.shape),))


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    ts = [_coerce(t) for t in tensors]
    if not ts:
        raise ShapeError("concat of an empty sequence")
    base = list(ts[0].data.shape)
    ax = axis % ts[0].data.ndim if ts[0].data.ndim else 0
    for t in ts[1:]:
        other = list(t.data.shape)
        if len(other) != len(base) or any(
            i != ax and other[i] != base[i] for i in range(len(base))
        ):
            raise ShapeError(f"concat: shapes {tuple(base)} and {t.data.shape} differ off-axis")
    out = np.concatenate([t.data for t in ts], axis=ax)
    sizes = [t.data.shape[ax] for t in ts]

    def grad_fn(g):
        pieces = []
        start = 0
        for n in sizes:
            idx = [slice(None)] * g.ndim
            idx[ax] = slice(start, start + n)
            pieces.append(g[tuple(idx)])
            start += n
        return tuple(pieces)

    return _make(out, tuple(ts), grad_fn)


def slice_(a, index) -> Tensor:
    """Basic indexing (ints and slices); gradient scatters into a zero array."""
    a = _coerce(a)
    out = a.data[index]

    def grad_fn(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return _make(np.array(out, copy=True), (a,), grad_fn)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    out = _ordered_sum(a.data, axis, keepdims)

    def grad_fn(g):
        if axis is None:
            return (np.broadcast_to(g.reshape((1,) * a.data.ndim), a.data.shape).copy(),)
        ax = axis % a.data.ndim
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return _make(out, (a,), grad_fn)


def mean(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _coerce(a)
    n = a.data.size if axis is None else a.data.shape[axis % a.data.ndim]
    return div(sum_(a, axis, keepdims), float(n))


def std(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    """Population standard deviation along one axis (divisor = axis length).

    Gradient requires the deviation to be strictly positive.
    """
    a = _coerce(a)
    ax = axis % a.data.ndim
    n = a.data.shape[ax]
    mu = _ordered_sum(a.data, ax, keepdims=True) / n
    centered = a.data - mu
    var = _ordered_sum(centered * centered, ax, keepdims=True) / n
    sigma_keep = np.sqrt(var)
    out = sigma_keep if keepdims else np.squeeze(sigma_keep, ax)

    def grad_fn(g):
        if np.any(sigma_keep == 0.0):
            raise ValueError("std gradient undefined at zero deviation")
        gk = g if keepdims else np.expand_dims(g, ax)
        return (gk * centered / (n * sigma_keep),)

    return _make(out.copy(), (a,), grad_fn)


def norm(a, axis: int = -1, keepdims: bool = False) -> Tensor:
    """L2 norm along one axis. Gradient requires a nonzero norm."""
    a = _coerce(a)
    ax = axis % a.data.ndim
    sq = _ordered_sum(a.data * a.data, ax, keepdims=True)
    nk = np.sqrt(sq)
    out = nk if keepdims else np.squeeze(nk, ax)

    def grad_fn(g):
        if np.any(nk == 0.0):
            raise ValueError("norm gradient undefined at zero norm")
        gk = g if keepdims else np.expand_dims(g, ax)
        return (gk * a.data / nk,)

    return _make(out.copy(), (a,), grad_fn)


def masked_fill(a, mask: np.ndarray, value: float) -> Tensor:
    """Replace entries where mask is True by value; gradient is zero there.

    The fill value may be -inf (softmax masking); that is the one documented
    way non-finite data enters the engine, and softmax consumes it.
    """
    a = _coerce(a)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.data.shape:
        raise ShapeError(f"masked_fill: mask shape {mask.shape} != data shape {a.data.shape}")
    out = np.where(mask, np.float64(value), a.data)

    def grad_fn(g):
        return (np.where(mask, 0.0, g),)

    return _make(out, (a,), grad_fn)


def softmax(a, axis: int = -1) -> Tensor:
    """Row softmax with max subtraction. Rejects fully masked rows."""
    a = _coerce(a)
    ax = axis % a.data.ndim
    m = np.max(a.data, axis=ax, keepdims=True)
    if np.any(np.isneginf(m)):
        raise ValueError("softmax over a fully masked row")
    e = np.exp(a.data - m)
    denom = _ordered_sum(e, ax, keepdims=True)
    out = e / denom

    def grad_fn(g):
        dot = _ordered_sum(g * out, ax, keepdims=True)
        return (out * (g - dot),)

    return _make(out, (a,), grad_fn)


def log_softmax(a, axis: int = -1) -> Tensor:
    a = _coerce(a)
    ax = axis % a.data.ndim
    m = np.max(a.data, axis=ax, keepdims=True)
    if np.any(np.isneginf(m)):
        raise ValueError("log_softmax over a fully masked row")
    z = a.data - m
    lse = np.log(_ordered_sum(np.exp(z), ax, keepdims=True))
    out = z - lse

    def grad_fn(g):
        tot = _ordered_sum(g, ax, keepdims=True)
        return (g - np.exp(out) * tot,)

    return _make(out, (a,), grad_fn)


def embedding(table, ids: np.ndarray) -> Tensor:
    """Gather rows of table by integer ids; gradient scatter-adds."""
    table = _coerce(table)
    ids = np.asarray(ids)
    if not np.issubdtype(ids.dtype, np.integer):
        raise ValueError("embedding ids must be integers")
    if ids.size and (ids.min() < 0 or ids.max() >= table.data.shape[0]):
        raise ValueError(
            f"embedding id out of range [0, {table.data.shape[0]}): "
            f"min={ids.min()}, max={ids.max()}"
        )
    out = table.data[ids]

    def grad_fn(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return _make(out.copy(), (table,), grad_fn)


def take_along_last(a, idx: np.ndarray) -> Tensor:
    """Pick one entry per row along the last axis (integer idx, shape a.shape[:-1])."""
    a = _coerce(a)
    idx = np.asarray(idx)
    if idx.shape != a.data.shape[:-1]:
        raise ShapeError(
            f"take_along_last: index shape {idx.shape} != row shape {a.data.shape[:-1]}"
        )
    expanded = np.expand_dims(idx, -1)
    out = np.take_along_axis(a.data, expanded, axis=-1)[..., 0]

    def grad_fn(g):
        full = np.zeros_like(a.data)
        np.put_along_axis(full, expanded, np.expand_dims(g, -1), axis=-1)
        return (full,)

    return _make(out.copy(), (a,), grad_fn)


# ---------------------------------------------------------------------------
# composites (built from the primitives above; order of operations is fixed)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then affine."""
    mu = mean(x, axis=-1, keepdims=True)
    centered = sub(x, mu)
    var = mean(mul(centered, centered), axis=-1, keepdims=True)
    y = div(centered, sqrt(add(var, eps)))
    return add(mul(y, gain), bias)


_GELU_C = float(np.sqrt(2.0 / np.pi))


def gelu(x) -> Tensor:
    """Gaussian error linear unit, tanh approximation."""
    x = _coerce(x)
    cubic = mul(mul(x, x), x)
    inner = mul(_GELU_C, add(x, mul(0.044715, cubic)))
    return mul(mul(0.5, x), add(1.0, tanh(inner)))


def cross_entropy(logits, targets: np.ndarray, mask: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of targets over positions where mask is True.

    logits: [..., V]; targets: integer [...]; mask: boolean [...].
    """
    mask = np.asarray(mask, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        raise ValueError("cross_entropy: empty mask")
    logp = log_softmax(logits, axis=-1)
    picked = take_along_last(logp, np.asarray(targets))
    masked = mul(picked, mask.astype(np.float64))
    return div(neg(sum_(masked)), float(n))


def cosine_similarity(a, b, axis: int = -1) -> Tensor:
    """cos(a, b) along one axis; both operands must have nonzero norm."""
    num = sum_(mul(a, b), axis=axis)
    return div(num, mul(norm(a, axis=axis), norm(b, axis=axis)))


# ---------------------------------------------------------------------------
# gradient checking


def finite_diff_check(f: Callable[[Tensor], Tensor], x: Tensor, eps: float = 1e-5) -> float:
    """Max relative error between analytic gradient of f at x and central differences.

    Error per coordinate is |analytic - central| / max(1, |central|); f must be
    deterministic and finite on the probed points; eps must lie in [1e-7, 1e-3].
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ValueError(f"eps must be in [1e-7, 1e-3], got {eps}")
    leaf = Tensor(x.data.copy(), requires_grad=True)
    tape = Tape()
    with tape:
        y = f(leaf)
    if y.data.ndim != 0:
        raise ValueError(f"f must return a scalar, got shape {y.data.shape}")
    if not np.isfinite(y.data):
        raise ValueError("f returned a non-finite value")
    tape.backward(y)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)

    def eval_at(arr: np.ndarray) -> float:
        out = f(Tensor(arr))
        val = float(out.data)
        if not np.isfinite(val):
            raise ValueError("f returned a non-finite value")
        return val

    worst = 0.0
    flat = leaf.data.reshape(-1)
    for i in range(flat.size):
        bump = np.zeros_like(flat)
        bump[i] = eps
        plus = eval_at((flat + bump).reshape(leaf.data.shape))
        minus = eval_at((flat - bump).reshape(leaf.data.shape))
        central = (plus - minus) / (2.0 * eps)
        err = abs(analytic.reshape(-1)[i] - central) / max(1.0, abs(central))
        worst = max(worst, err)
    return worst
