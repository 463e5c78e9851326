"""Parameter containers and attention/MLP blocks shared by encoder and decoder."""

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .errors import DimensionError
from .tensor import DiffTensor


@dataclass
class NormParams:
    gamma: DiffTensor
    beta: DiffTensor


@dataclass
class Conv1dParams:
    w: DiffTensor
    b: DiffTensor


@dataclass
class AttentionParams:
    wq: DiffTensor
    wk: DiffTensor
    wv: DiffTensor
    wo: DiffTensor
    bo: DiffTensor


@dataclass
class MLPParams:
    w1: DiffTensor
    b1: DiffTensor
    w2: DiffTensor
    b2: DiffTensor


def uniform(rng, fan_in, shape, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return tn.parameter(rng.uniform(-bound, bound, size=shape), dtype=dtype)


def zeros(shape, dtype):
    return tn.parameter(np.zeros(shape), dtype=dtype)


def init_norm(width, dtype):
    return NormParams(tn.parameter(np.ones(width), dtype=dtype), zeros(width, dtype))


def init_conv(rng, cin, cout, dtype, zero=False):
    if zero:
        return Conv1dParams(zeros((cin, cout), dtype), zeros(cout, dtype))
    return Conv1dParams(uniform(rng, cin, (cin, cout), dtype), uniform(rng, cin, cout, dtype))


def init_attention(rng, width, dtype):
    w = [uniform(rng, width, (width, width), dtype) for _ in range(4)]
    return AttentionParams(*w, zeros(width, dtype))


def init_mlp(rng, width, hidden, dtype):
    return MLPParams(
        uniform(rng, width, (width, hidden), dtype),
        zeros(hidden, dtype),
        uniform(rng, hidden, (hidden, width), dtype),
        zeros(width, dtype),
    )


def iter_parameters(obj, prefix=""):
    """Yield ``(dotted_name, DiffTensor)`` for every tensor inside nested dataclasses/lists."""
    if isinstance(obj, DiffTensor):
        yield prefix.rstrip("."), obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            yield from iter_parameters(getattr(obj, f.name), f"{prefix}{f.name}.")
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            yield from iter_parameters(item, f"{prefix}{i}.")


def _split_heads(x, heads):
    *lead, t, w = x.shape
    x = x.reshape(*lead, t, heads, w // heads)
    nd = x.ndim
    return x.transpose(*range(nd - 3), nd - 2, nd - 3, nd - 1)


def _merge_heads(x):
    nd = x.ndim
    x = x.transpose(*range(nd - 3), nd - 2, nd - 3, nd - 1)
    *lead, t, h, dh = x.shape
    return x.reshape(*lead, t, h * dh)


def attention(xq, xkv, p, heads):
    """Multi-head scaled dot-product attention.

    Queries come from ``xq [..., Tq, W]``, keys and values from
    ``xkv [..., Tk, W]``. Returns the projected output and the attention
    weights ``[..., heads, Tq, Tk]`` as a plain array.
    """
    width = p.wq.shape[0]
    if xq.shape[-1] != width or xkv.shape[-1] != width:
        raise DimensionError(
            f"attention: inputs {xq.shape} / {xkv.shape} do not match projection width {width}"
        )
    if width % heads:
        raise DimensionError(f"attention: width {width} not divisible by {heads} heads")
    q = _split_heads(tn.matmul(xq, p.wq), heads)
    k = _split_heads(tn.matmul(xkv, p.wk), heads)
    v = _split_heads(tn.matmul(xkv, p.wv), heads)
    nd = k.ndim
    kt = k.transpose(*range(nd - 2), nd - 1, nd - 2)
    scores = tn.matmul(q, kt) * (1.0 / np.sqrt(width // heads))
    weights = tn.softmax(scores, axis=-1)
    out = _merge_heads(tn.matmul(weights, v))
    return tn.add(tn.matmul(out, p.wo), p.bo), weights.data


def mlp(x, p, slope):
    h = tn.leaky_relu(tn.add(tn.matmul(x, p.w1), p.b1), slope)
    return tn.add(tn.matmul(h, p.w2), p.b2)


def norm(x, p, eps):
    return tn.layer_norm(x, p.gamma, p.beta, eps)
