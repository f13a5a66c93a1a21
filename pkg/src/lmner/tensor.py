"""Dense tensors with reverse-mode automatic differentiation.

The engine is deliberately small: a ``Tensor`` wraps a numpy array, ops
record their inputs and a backward closure, and ``backward()`` walks the
graph in reverse topological order. Gradients accumulate into ``.grad``
until explicitly cleared, so several losses can be backpropagated into
the same parameters before an optimizer step.

Training code runs in float32; passing float64 arrays into parameter
constructors switches the whole downstream graph to double precision,
which is what the finite-difference tests do.
"""

from __future__ import annotations

from contextlib import contextmanager

import numpy as np

from .errors import ContractError, NumericError

DEFAULT_DTYPE = np.float32

# When enabled, backward() inspects every node's accumulated gradient and
# aborts on the first NaN, naming the op where it was observed.
_NAN_CHECKS = True
_GRAD_ENABLED = True


def set_nan_checks(enabled: bool) -> bool:
    """Toggle NaN detection during backward(); returns the previous setting."""
    global _NAN_CHECKS
    previous = _NAN_CHECKS
    _NAN_CHECKS = bool(enabled)
    return previous


@contextmanager
def no_grad():
    """Skip graph construction inside the block (inference paths)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """N-dimensional array with an attached gradient slot.

    data: numpy array (row-major); grad: same-shape numpy array or None.
    Only ops defined in this module build graph edges; everything the
    models need (matmul, add, mul, tanh, sigmoid, relu, max/sum over an
    axis, concat, slicing/gather, reshape, transpose, logsumexp and fused
    softmax cross-entropy) is here, nothing else.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_op")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None, _op="leaf"):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward_fn = _backward
        self._op = _op

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else self._scalar_err()

    def _scalar_err(self):
        raise ContractError(f"item() requires a scalar tensor, got shape {self.shape}")

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    # -- graph construction helpers ------------------------------------------

    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    @staticmethod
    def _result(data, parents, backward, op):
        needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        if not needs:
            return Tensor(data, _op=op)
        return Tensor(data, requires_grad=True, _parents=tuple(parents), _backward=backward, _op=op)

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        a, b = self, other
        out_data = a.data + b.data

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))

        return Tensor._result(out_data, (a, b), backward, "add")

    __radd__ = __add__

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self, other
        out_data = a.data * b.data

        def backward(g):
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))

        return Tensor._result(out_data, (a, b), backward, "mul")

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self, other
        if a.ndim != 2 or b.ndim != 2:
            raise ContractError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
        out_data = a.data @ b.data

        def backward(g):
            if a.requires_grad:
                a._accumulate(g @ b.data.T)
            if b.requires_grad:
                b._accumulate(a.data.T @ g)

        return Tensor._result(out_data, (a, b), backward, "matmul")

    # -- nonlinearities ---------------------------------------------------------

    def tanh(self):
        out_data = np.tanh(self.data)
        a = self

        def backward(g):
            a._accumulate(g * (1.0 - out_data * out_data))

        return Tensor._result(out_data, (a,), backward, "tanh")

    def sigmoid(self):
        x = self.data
        out_data = np.empty_like(x)
        pos = x >= 0
        out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out_data[~pos] = ex / (1.0 + ex)
        a = self

        def backward(g):
            a._accumulate(g * out_data * (1.0 - out_data))

        return Tensor._result(out_data, (a,), backward, "sigmoid")

    def relu(self):
        out_data = np.maximum(self.data, 0.0)
        a = self

        def backward(g):
            a._accumulate(g * (a.data > 0))

        return Tensor._result(out_data, (a,), backward, "relu")

    # -- reductions ---------------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        out_data = self.data.sum(axis=axis, keepdims=keepdims)
        a = self

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape).copy())

        return Tensor._result(out_data, (a,), backward, "sum")

    def mean(self, axis=None):
        n = self.size if axis is None else self.shape[axis]
        return self.sum(axis=axis) * (1.0 / n)

    def max(self, axis: int, keepdims=False):
        """Maximum over one axis; gradient flows to the first argmax only."""
        out_data = self.data.max(axis=axis, keepdims=keepdims)
        idx = np.argmax(self.data, axis=axis)
        a = self

        def backward(g):
            if keepdims:
                g = np.squeeze(g, axis=axis)
            buf = np.zeros_like(a.data)
            np.put_along_axis(buf, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis)
            a._accumulate(buf)

        return Tensor._result(out_data, (a,), backward, "max")

    def logsumexp(self, axis: int, keepdims=False):
        """log(sum(exp(x))) along an axis, with max-subtraction for stability."""
        m = self.data.max(axis=axis, keepdims=True)
        shifted = np.exp(self.data - m)
        total = shifted.sum(axis=axis, keepdims=True)
        out_k = np.log(total) + m
        out_data = out_k if keepdims else np.squeeze(out_k, axis=axis)
        softmax = shifted / total
        a = self

        def backward(g):
            if not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(g * softmax)

        return Tensor._result(out_data, (a,), backward, "logsumexp")

    # -- shape & indexing ------------------------------------------------------------

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out_data = self.data.reshape(shape)
        a = self

        def backward(g):
            a._accumulate(g.reshape(a.shape))

        return Tensor._result(out_data, (a,), backward, "reshape")

    def transpose(self, axes=None):
        out_data = self.data.transpose(axes)
        if axes is None:
            inv = None
        else:
            inv = np.argsort(axes)
        a = self

        def backward(g):
            a._accumulate(g.transpose(inv))

        return Tensor._result(out_data, (a,), backward, "transpose")

    @property
    def T(self):
        return self.transpose()

    def __getitem__(self, key):
        out_data = self.data[key]
        a = self

        def backward(g):
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            np.add.at(a.grad, key, g)

        return Tensor._result(out_data, (a,), backward, "slice")

    def take_rows(self, indices) -> "Tensor":
        """Gather rows by integer index (embedding lookup); duplicates allowed."""
        idx = np.asarray(indices, dtype=np.int64)
        return self[idx]


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return Tensor._result(out_data, tensors, backward, "concat")


def softmax_cross_entropy(logits: Tensor, targets, reduction="mean") -> Tensor:
    """Cross-entropy of integer targets under softmax(logits), fused for stability.

    logits: [N, C]; targets: length-N integer array. Returns a scalar
    (mean or sum over the N rows).
    """
    if logits.ndim != 2:
        raise ContractError(f"softmax_cross_entropy expects [N, C] logits, got {logits.shape}")
    t = np.asarray(targets, dtype=np.int64)
    n, c = logits.shape
    if t.shape != (n,):
        raise ContractError(f"targets shape {t.shape} does not match {n} logit rows")
    if t.size and (t.min() < 0 or t.max() >= c):
        raise ContractError("target id out of range")
    x = logits.data
    m = x.max(axis=1, keepdims=True)
    shifted = np.exp(x - m)
    total = shifted.sum(axis=1, keepdims=True)
    log_z = np.log(total) + m  # [N, 1]
    losses = log_z[:, 0] - x[np.arange(n), t]
    if reduction == "mean":
        out_data = losses.mean()
        scale = 1.0 / n
    elif reduction == "sum":
        out_data = losses.sum()
        scale = 1.0
    else:
        raise ContractError(f"unknown reduction {reduction!r}")
    softmax = shifted / total

    def backward(g):
        dx = softmax.copy()
        dx[np.arange(n), t] -= 1.0
        logits._accumulate(dx * (g * scale))

    return Tensor._result(np.asarray(out_data), (logits,), backward, "softmax_cross_entropy")


def backward(loss: Tensor) -> None:
    """Fill .grad of every parameter reachable from a scalar loss.

    Gradients accumulate across calls until cleared, so summing
    contributions from several losses is just several backward() calls
    (or one call on their sum).
    """
    if loss.size != 1:
        raise ContractError(f"backward() requires a scalar loss, got shape {loss.shape}")
    if np.isnan(loss.data).any():
        raise NumericError("loss is NaN before backward")
    if not loss.requires_grad:
        return

    topo = []
    visited = set()
    stack = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))

    loss._accumulate(np.ones_like(loss.data))
    for node in reversed(topo):
        if node._backward_fn is None:
            continue
        if _NAN_CHECKS and np.isnan(node.grad).any():
            raise NumericError(f"NaN gradient detected at op '{node._op}'")
        node._backward_fn(node.grad)
        # Interior nodes hand their gradient on and forget it; only leaves
        # (parameters) accumulate across backward calls.
        node.grad = None


# -- initialization and regularization ------------------------------------------


def make_rng(seed: int) -> np.random.Generator:
    """Deterministic generator; same seed and op sequence give identical streams."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def init_uniform(shape, lo, hi, rng, dtype=DEFAULT_DTYPE, requires_grad=True) -> Tensor:
    if not lo < hi:
        raise ContractError(f"init_uniform requires lo < hi, got ({lo}, {hi})")
    data = rng.uniform(lo, hi, size=shape).astype(dtype)
    return Tensor(data, requires_grad=requires_grad)


def init_xavier(shape, rng, dtype=DEFAULT_DTYPE, requires_grad=True) -> Tensor:
    """Uniform(-b, b) with b = sqrt(6 / (fan_in + fan_out)).

    fan_out is the leading dimension, fan_in the product of the rest,
    which covers both matrices [out, in] and filter banks [n, d, w].
    """
    shape = tuple(shape)
    if len(shape) < 2:
        raise ContractError("xavier init needs at least 2 dimensions")
    fan_out = shape[0]
    fan_in = int(np.prod(shape[1:]))
    bound = float(np.sqrt(6.0 / (fan_in + fan_out)))
    return init_uniform(shape, -bound, bound, rng, dtype=dtype, requires_grad=requires_grad)


def init_zeros(shape, dtype=DEFAULT_DTYPE, requires_grad=True) -> Tensor:
    return Tensor(np.zeros(shape, dtype=dtype), requires_grad=requires_grad)


def dropout(x: Tensor, p: float, training: bool, rng) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ContractError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * Tensor(mask)
