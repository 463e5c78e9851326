"""Shared oracles for the test suite."""

import numpy as np

from kinepose import tensor as tn


def numeric_grad(f, arr, eps=1e-5, index=None):
    """Central-difference gradient of scalar ``f()`` with respect to ``arr`` (mutated in place).

    With ``index`` only that entry is probed and a float is returned.
    """
    def probe(i):
        old = arr[i]
        arr[i] = old + eps
        hi = f()
        arr[i] = old - eps
        lo = f()
        arr[i] = old
        return (hi - lo) / (2 * eps)

    if index is not None:
        return probe(index)
    g = np.zeros_like(arr)
    for i in np.ndindex(arr.shape):
        g[i] = probe(i)
    return g


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def check_op_grad(build, *arrays, eps=1e-5):
    """Worst relative error between backward and finite differences for ``sum(build(*leaves))``-style scalars.

    ``build`` receives DiffTensor leaves and returns a scalar DiffTensor.
    """
    leaves = [tn.parameter(a.copy()) for a in arrays]
    tn.backward(build(*leaves))
    worst = 0.0
    for leaf in leaves:
        def f():
            with tn.no_grad():
                return build(*[tn.tensor(x.data) for x in leaves]).item()

        num = numeric_grad(f, leaf.data, eps)
        worst = max(worst, rel_err(leaf.grad, num))
    return worst


def random_weights(rng, shape, scale=1.0):
    return rng.uniform(-scale, scale, size=shape)
