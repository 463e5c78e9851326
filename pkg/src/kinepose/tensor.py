"""
Dense float arrays with reverse-mode automatic differentiation.

Every operation on a :class:`DiffTensor` that requires gradients records its
inputs and a closure mapping the output gradient to input gradients. Calling
:func:`backward` on a scalar walks the graph in reverse topological order and
accumulates into ``.grad`` of every leaf that requires gradients. The graph is
released afterwards unless ``retain_graph`` is set.

Operations broadcast along leading (batch) axes where the model needs it, e.g.
a 2-D weight against a batch of sequences in :func:`matmul`.
"""

from contextlib import contextmanager

import numpy as np

from .errors import DimensionError

__all__ = [
    "DiffTensor",
    "tensor",
    "parameter",
    "no_grad",
    "backward",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "reshape",
    "transpose",
    "concat",
    "take",
    "sum",
    "mean",
    "abs",
    "square",
    "sqrt",
    "softmax",
    "layer_norm",
    "leaky_relu",
    "conv1d_time",
    "detach",
    "default_rng",
]

_grad_enabled = True


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def default_rng(seed):
    """Seeded generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(seed))


class DiffTensor:
    """A float array plus optional gradient buffer and producing-op record."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype.kind != "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.name = name

    # basic properties

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

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"DiffTensor(shape={self.shape}{tag}, requires_grad={self.requires_grad})"

    # operator sugar

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims=False):
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def tensor(data, requires_grad=False, dtype=None):
    if isinstance(data, DiffTensor):
        return data
    return DiffTensor(data, requires_grad=requires_grad, dtype=dtype)


def parameter(data, name=None, dtype=None):
    return DiffTensor(np.array(data, copy=True), requires_grad=True, name=name, dtype=dtype)


def _lift(x, like=None):
    if isinstance(x, DiffTensor):
        return x
    dtype = like.dtype if like is not None else None
    return DiffTensor(np.asarray(x, dtype=dtype) if dtype is not None else x)


def _result(data, parents, backward_fn):
    out = DiffTensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _unbroadcast(grad, shape):
    """Sum ``grad`` down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


def _check_broadcast(a, b, op):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# elementwise arithmetic


def add(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "add")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _result(a.data + b.data, (a, b), bw)


def sub(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "sub")

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _result(a.data - b.data, (a, b), bw)


def mul(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "mul")

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _result(a.data * b.data, (a, b), bw)


def div(a, b):
    a, b = _lift(a), _lift(b)
    _check_broadcast(a, b, "div")

    def bw(g):
        ga = g / b.data
        gb = -g * a.data / (b.data * b.data)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(a.data / b.data, (a, b), bw)


def neg(a):
    a = _lift(a)
    return _result(-a.data, (a,), lambda g: (-g,))


def abs(a):
    a = _lift(a)
    return _result(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def square(a):
    a = _lift(a)
    return _result(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def sqrt(a):
    """Square root whose gradient at 0 is taken as 0 (a valid subgradient choice)."""
    a = _lift(a)
    out = np.sqrt(a.data)

    def bw(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g / (2.0 * safe), 0.0),)

    return _result(out, (a,), bw)


# linear algebra and shape ops


def matmul(a, b):
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: inner extents differ, shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul: batch axes differ, shapes {a.shape} and {b.shape}") from None

    def bw(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result(a.data @ b.data, (a, b), bw)


def reshape(a, shape):
    a = _lift(a)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError(f"reshape: cannot view {a.shape} as {tuple(shape)}") from None
    return _result(out, (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None):
    a = _lift(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return _result(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def concat(tensors, axis=-1):
    tensors = [_lift(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        shapes = ", ".join(str(t.shape) for t in tensors)
        raise DimensionError(f"concat: incompatible shapes {shapes} along axis {axis}") from None
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def bw(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _result(out, tensors, bw)


def take(a, indices, axis):
    """Gather ``indices`` along ``axis``; repeated indices accumulate gradient."""
    a = _lift(a)
    indices = np.asarray(indices, dtype=np.intp)

    def bw(g):
        full = np.zeros_like(a.data)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, indices, np.moveaxis(g, axis, 0))
        return (full,)

    return _result(np.take(a.data, indices, axis=axis), (a,), bw)


def sum(a, axis=None, keepdims=False):
    a = _lift(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _result(out, (a,), bw)


def mean(a, axis=None, keepdims=False):
    a = _lift(a)
    count = a.data.size if axis is None else int(np.prod([a.shape[i] for i in np.atleast_1d(axis)]))
    return div(sum(a, axis=axis, keepdims=keepdims), float(count))


def detach(a):
    """Copy of ``a`` that is a graph leaf with no gradient."""
    a = _lift(a)
    return DiffTensor(a.data)


# neural-network primitives


def softmax(x, axis=-1):
    x = _lift(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _result(y, (x,), bw)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize the last axis to zero mean and unit variance, then scale and shift."""
    x, gamma, beta = _lift(x), _lift(gamma), _lift(beta)
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(
            f"layer_norm: feature width {c} of input {x.shape} does not match "
            f"gamma {gamma.shape} / beta {beta.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def bw(g):
        lead = tuple(range(g.ndim - 1))
        dxhat = g * gamma.data
        dx = inv * (
            dxhat
            - dxhat.mean(axis=-1, keepdims=True)
            - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
        )
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _result(xhat * gamma.data + beta.data, (x, gamma, beta), bw)


def leaky_relu(x, slope=0.01):
    x = _lift(x)
    pos = x.data >= 0
    return _result(
        np.where(pos, x.data, slope * x.data),
        (x,),
        lambda g: (np.where(pos, g, slope * g),),
    )


def conv1d_time(x, w, b):
    """Kernel-size-1 convolution along time: the same affine map at every step.

    ``x`` is ``[..., T, Cin]``, ``w`` is ``[Cin, Cout]``, ``b`` is ``[Cout]``.
    """
    x, w, b = _lift(x), _lift(w), _lift(b)
    if w.ndim != 2 or x.shape[-1] != w.shape[0]:
        raise DimensionError(f"conv1d_time: input {x.shape} does not match weight {w.shape}")
    if b.shape != (w.shape[1],):
        raise DimensionError(f"conv1d_time: bias {b.shape} does not match weight {w.shape}")
    return add(matmul(x, w), b)


# graph traversal


def _topo_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(loss, retain_graph=False):
    """Populate ``.grad`` of every leaf reachable from the scalar ``loss``.

    Gradients accumulate into existing ``.grad`` buffers; zero them between
    steps. The graph is released after the pass unless ``retain_graph``.
    """
    if not isinstance(loss, DiffTensor) or loss.data.size != 1:
        shape = getattr(loss, "shape", type(loss).__name__)
        raise ValueError(f"backward() requires a scalar loss, got shape {shape}")
    if not loss.requires_grad:
        return
    order = _topo_order(loss)
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg
    if not retain_graph:
        for node in order:
            if node._backward is not None:
                node._parents = ()
                node._backward = None
