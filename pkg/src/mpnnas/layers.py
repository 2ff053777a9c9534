"""Parameterised building blocks on top of :mod:`mpnnas.tensor`."""

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor


def glorot(rng, fan_in, fan_out, shape=None):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    shape = (fan_in, fan_out) if shape is None else shape
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)


def zeros(shape):
    return Tensor(np.zeros(shape), requires_grad=True)


class ParamRegistry:
    """Ordered name -> parameter mapping shared by the layers of one model."""

    def __init__(self, rng):
        self.rng = rng
        self.params = {}

    def add(self, name, t):
        if name in self.params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t.name = name
        self.params[name] = t
        return t

    def weight(self, name, fan_in, fan_out, shape=None):
        return self.add(name, glorot(self.rng, fan_in, fan_out, shape))

    def bias(self, name, shape):
        return self.add(name, zeros(shape))

    def count(self, prefix=""):
        return sum(p.size for n, p in self.params.items() if n.startswith(prefix))


class Dense:
    def __init__(self, reg, name, n_in, n_out, activation="linear"):
        self.n_in, self.n_out = n_in, n_out
        self.W = reg.weight(f"{name}/W", n_in, n_out)
        self.b = reg.bias(f"{name}/b", (n_out,))
        self.activation = T.ACTIVATIONS[activation]

    def __call__(self, x):
        if x.shape[-1] != self.n_in:
            raise ShapeError(f"dense: expected width {self.n_in}, got {x.shape}")
        return self.activation(T.matmul(x, self.W) + self.b)


class GRUCell:
    """Gated recurrent unit: ``h' = (1 - z) * h + z * n``.

    ``z`` is the update gate, ``r`` the reset gate, and
    ``n = tanh(x Wn + (r * h) Un + bn)`` the candidate state.
    """

    def __init__(self, reg, name, d):
        self.d = d
        self.W = reg.weight(f"{name}/W", d, d, (d, 3 * d))
        self.U = reg.weight(f"{name}/U", d, d, (d, 3 * d))
        self.b = reg.bias(f"{name}/b", (3 * d,))

    def __call__(self, h, x):
        return gru_cell(h, x, self.W, self.U, self.b)


def gru_cell(h, x, W, U, b):
    """One GRU step. ``h`` and ``x`` are ``(d,)`` vectors or ``(n, d)`` row stacks."""
    h, x = T.as_tensor(h), T.as_tensor(x)
    d = h.shape[-1]
    if x.shape[-1] != d:
        raise ShapeError(f"gru_cell: state width {d} != input width {x.shape[-1]}")
    if W.shape != (d, 3 * d) or U.shape != (d, 3 * d) or b.shape != (3 * d,):
        raise ShapeError(f"gru_cell: parameter shapes {W.shape}, {U.shape}, {b.shape} "
                         f"do not fit width {d}")
    if h.ndim == 1 and x.ndim == 1:
        out = gru_cell(T.reshape(h, (1, d)), T.reshape(x, (1, d)), W, U, b)
        return T.reshape(out, (d,))
    xw = T.matmul(x, W) + b
    hu_zr = T.matmul(h, _cols(U, 0, 2 * d))
    z = T.sigmoid(_cols(xw, 0, d) + _cols(hu_zr, 0, d))
    r = T.sigmoid(_cols(xw, d, 2 * d) + _cols(hu_zr, d, 2 * d))
    n = T.tanh(_cols(xw, 2 * d, 3 * d) + T.matmul(r * h, _cols(U, 2 * d, 3 * d)))
    return (1.0 - z) * h + z * n


def _cols(a, start, stop):
    """Differentiable column slice ``a[..., start:stop]``."""
    return T.slice_last(a, start, stop)
