"""A small reverse-mode automatic differentiation kernel on top of numpy.

Every value is a :class:`Tensor` holding a float64 array.  Operations that
touch a tensor with ``requires_grad`` record their parents and a backward
closure; :func:`backward` walks the resulting graph in reverse topological
order.  Operations accept an optional leading batch axis so that a whole
mini-batch goes through one call.
"""

import threading
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError, DimensionError, InvalidLengthError

TANH_CLAMP = 1e-12
LEAKY_SLOPE = 0.01

_state = threading.local()


def grad_enabled():
    return getattr(_state, "enabled", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread."""
    prev = grad_enabled()
    _state.enabled = False
    try:
        yield
    finally:
        _state.enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name", "_parents", "_backward")

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.item())

    def __repr__(self):
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    def backward(self):
        backward(self)

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

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, index):
        return getitem(self, index)


class Parameter(Tensor):
    """A trainable leaf tensor whose gradient accumulates across uses."""

    __slots__ = ()

    def __init__(self, data, name=None):
        super().__init__(data, requires_grad=True, name=name)
        self.grad = np.zeros_like(self.data)

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def record(data, parents, backward_fn):
    """Wrap ``data`` as the output of an operation.

    ``backward_fn(grad_out)`` must return one gradient (or None) per parent.
    Nothing is recorded when grad mode is off or no parent needs a gradient.
    """
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    else:
        out.requires_grad = False
        out._parents = ()
        out._backward = None
    return out


@dataclass
class Tape:
    """Operations reachable from an output, in topological order."""

    nodes: list = field(default_factory=list)

    @classmethod
    def from_output(cls, out):
        order = []
        seen = set()
        stack = [(out, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen or not node.requires_grad:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in seen:
                    stack.append((parent, False))
        return cls(order)


def backward(loss, tape=None):
    """Accumulate d(loss)/d(leaf) into the ``grad`` of every leaf tensor."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor requiring grad")
    if tape is None:
        tape = Tape.from_output(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.grad is None:
                node.grad = np.zeros_like(node.data)
            node.grad = node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg


def _unbroadcast(grad, shape):
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# elementwise arithmetic ------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return record(a.data + b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return record(a.data - b.data, (a, b),
                  lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return record(a.data * b.data, (a, b),
                  lambda g: (_unbroadcast(g * b.data, a.shape),
                             _unbroadcast(g * a.data, b.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return record(out, (a, b),
                  lambda g: (_unbroadcast(g / b.data, a.shape),
                             _unbroadcast(-g * out / b.data, b.shape)))


def exp(x):
    out = np.exp(x.data)
    return record(out, (x,), lambda g: (g * out,))


def log(x):
    return record(np.log(x.data), (x,), lambda g: (g / x.data,))


def square(x):
    return record(x.data * x.data, (x,), lambda g: (2.0 * g * x.data,))


def clip(x, lo, hi):
    inside = (x.data >= lo) & (x.data <= hi)
    return record(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,))


def tanh(x):
    """tanh with outputs held strictly inside (-1, 1)."""
    y = np.tanh(x.data)
    lim = 1.0 - TANH_CLAMP
    active = np.abs(y) <= lim
    y = np.clip(y, -lim, lim)
    return record(y, (x,), lambda g: (g * (1.0 - y * y) * active,))


def leaky_relu(x, slope=LEAKY_SLOPE):
    pos = x.data >= 0
    return record(np.where(pos, x.data, slope * x.data), (x,),
                  lambda g: (np.where(pos, g, slope * g),))


def activation(x, kind="tanh", slope=LEAKY_SLOPE):
    if kind == "tanh":
        return tanh(x)
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    raise ValueError(f"unknown activation {kind!r}")


# reductions and shape plumbing -------------------------------------------------

def sum(x, axis=None):  # noqa: A001 - mirrors numpy naming
    shape = x.shape

    def grad_fn(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return record(np.asarray(x.data.sum(axis=axis)), (x,), grad_fn)


def mean(x, axis=None):
    n = x.data.size if axis is None else x.shape[axis]
    return sum(x, axis) * (1.0 / n)


def reshape(x, shape):
    old = x.shape
    return record(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def swapaxes(x, a, b):
    return record(np.swapaxes(x.data, a, b), (x,), lambda g: (np.swapaxes(g, a, b),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return record(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                  lambda g: tuple(np.split(g, cuts, axis=axis)))


def getitem(x, index):
    def grad_fn(g):
        out = np.zeros_like(x.data)
        np.add.at(out, index, g)
        return (out,)

    return record(np.array(x.data[index]), (x,), grad_fn)


# layers ---------------------------------------------------------------------------

def dense(x, W, b):
    """Affine map ``y = W x + b`` over the last axis of ``x``."""
    x, W, b = as_tensor(x), as_tensor(W), as_tensor(b)
    if W.ndim != 2 or x.shape[-1:] != W.shape[1:] or b.shape != W.shape[:1]:
        raise DimensionError(
            f"dense: x {x.shape}, W {W.shape}, b {b.shape} do not conform")
    # one gemv per row keeps each row's result independent of its batch position
    y = (x.data[..., None, :] @ W.data.T)[..., 0, :] + b.data

    def grad_fn(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        return g @ W.data, g2.T @ x2, g2.sum(axis=0)

    return record(y, (x, W, b), grad_fn)


def conv1d(x, K, b):
    """Valid, stride-1 cross-correlation of ``x[..., C_in, T]`` with ``K[C_out, C_in, L]``."""
    x, K, b = as_tensor(x), as_tensor(K), as_tensor(b)
    if K.ndim != 3 or x.ndim < 2 or x.shape[-2] != K.shape[1] or b.shape != K.shape[:1]:
        raise DimensionError(
            f"conv1d: x {x.shape}, K {K.shape}, b {b.shape} do not conform")
    T, L = x.shape[-1], K.shape[2]
    if T < L:
        raise InvalidLengthError(f"conv1d: input length {T} shorter than kernel {L}")
    C_out, C_in = K.shape[0], K.shape[1]
    Tp = T - L + 1
    # columns[..., c*L + k, t] = x[..., c, t + k]
    cols = np.lib.stride_tricks.sliding_window_view(x.data, L, axis=-1)
    cols = np.swapaxes(cols, -1, -2).reshape(x.shape[:-2] + (C_in * L, Tp))
    Kmat = K.data.reshape(C_out, C_in * L)
    y = Kmat @ cols + b.data[:, None]

    def grad_fn(g):
        g_cols = (Kmat.T @ g).reshape(x.shape[:-2] + (C_in, L, Tp))
        gx = np.zeros_like(x.data)
        for k in range(L):
            gx[..., :, k:k + Tp] += g_cols[..., :, k, :]
        g2 = np.moveaxis(g, -2, 0).reshape(C_out, -1)
        c2 = np.moveaxis(cols, -2, 0).reshape(C_in * L, -1)
        return gx, (g2 @ c2.T).reshape(K.shape), g2.sum(axis=1)

    return record(y, (x, K, b), grad_fn)


def pool_length(T, k, s, ceil=True):
    span = T - k
    if ceil:
        return -(-span // s) + 1
    return span // s + 1


def maxpool1d(x, k=2, s=2, ceil=True):
    """Max pooling over the last axis; ties route to the first occurrence."""
    if k < 1 or s < 1:
        raise ValueError("pool window and stride must be >= 1")
    T = x.shape[-1]
    if T < 1:
        raise InvalidLengthError("maxpool1d: empty input")
    Tp = pool_length(T, k, s, ceil)
    if Tp < 1:
        raise InvalidLengthError(f"maxpool1d: input length {T} shorter than window {k}")
    padded_len = (Tp - 1) * s + k
    xp = x.data
    if padded_len > T:
        pad = np.full(x.shape[:-1] + (padded_len - T,), -np.inf)
        xp = np.concatenate([xp, pad], axis=-1)
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=-1)[..., ::s, :]
    arg = windows.argmax(axis=-1)
    y = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    src = arg + np.arange(Tp) * s

    def grad_fn(g):
        gx = np.zeros(x.shape)
        flat_gx = gx.reshape(-1, T)
        rows = np.arange(flat_gx.shape[0])[:, None]
        np.add.at(flat_gx, (rows, src.reshape(-1, Tp)), g.reshape(-1, Tp))
        return (gx,)

    return record(y, (x,), grad_fn)


def segment_max(x, segments, num_segments, fill=-1.0):
    """Elementwise max of ``x[i]`` over rows sharing a segment id.

    Segments with no rows are filled with ``fill``.  The gradient goes to the
    first row attaining the max.
    """
    segments = np.asarray(segments, dtype=np.int64)
    if x.ndim < 1 or len(segments) != x.shape[0]:
        raise DimensionError(
            f"segment_max: {len(segments)} segment ids for input {x.shape}")
    out = np.full((num_segments,) + x.shape[1:], fill, dtype=np.float64)
    winners = np.full((num_segments,) + x.shape[1:], -1, dtype=np.int64)
    for seg in range(num_segments):
        rows = np.flatnonzero(segments == seg)
        if len(rows) == 0:
            continue
        block = x.data[rows]
        arg = block.argmax(axis=0)
        out[seg] = np.take_along_axis(block, arg[None], axis=0)[0]
        winners[seg] = rows[arg]

    def grad_fn(g):
        gx = np.zeros_like(x.data)
        mask = winners >= 0
        idx = np.nonzero(mask)
        np.add.at(gx, (winners[idx],) + idx[1:], g[idx])
        return (gx,)

    return record(out, (x,), grad_fn)


# gradient verification ---------------------------------------------------------------

def finite_diff_check(f, params, h=1e-5, entries=None):
    """Largest relative error between analytic and central-difference gradients.

    ``f`` maps nothing to a scalar :class:`Tensor` and must read ``params``
    through their ``data`` arrays.  ``entries`` optionally maps a parameter
    index to the flat indices to probe; by default every entry is probed.
    Returns ``(max_rel_err, worst)`` where ``worst`` names the offending entry.
    """
    for p in params:
        p.grad = np.zeros_like(p.data)
    loss = f()
    backward(loss)
    analytic = [p.grad.copy() for p in params]

    worst_err, worst = 0.0, None
    with no_grad():
        for i, p in enumerate(params):
            flat = p.data.reshape(-1)
            a_flat = analytic[i].reshape(-1)
            idx = range(flat.size) if entries is None else entries.get(i, ())
            for j in idx:
                orig = flat[j]
                flat[j] = orig + h
                fp = float(f().data)
                flat[j] = orig - h
                fm = float(f().data)
                flat[j] = orig
                num = (fp - fm) / (2.0 * h)
                err = abs(a_flat[j] - num) / (abs(a_flat[j]) + abs(num) + 1e-12)
                if err > worst_err:
                    worst_err, worst = err, (p.name or i, j, a_flat[j], num)
    for p in params:
        p.grad = np.zeros_like(p.data)
    return worst_err, worst
