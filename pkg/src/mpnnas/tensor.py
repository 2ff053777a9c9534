"""Small dense-tensor engine with tape-based reverse-mode differentiation.

Tensors wrap float64 numpy arrays. Primitive applications are recorded on the
innermost active :class:`Tape` whenever one of their inputs requires a
gradient; :meth:`Tape.backward` replays the record in reverse.

    >>> w = Tensor(np.ones((2, 1)), requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = sum_(matmul(Tensor([[1.0, 2.0]]), w))
    >>> tape.backward(loss)[w].ravel().tolist()
    [1.0, 2.0]
"""

import threading

import numpy as np

LEAKY_SLOPE = 0.2

_state = threading.local()


def _tape_stack():
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


class ShapeError(ValueError):
    """Raised when a primitive receives inputs of incompatible shapes."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    __add__ = lambda self, o: add(self, o)
    __radd__ = lambda self, o: add(o, self)
    __sub__ = lambda self, o: sub(self, o)
    __rsub__ = lambda self, o: sub(o, self)
    __mul__ = lambda self, o: mul(self, o)
    __rmul__ = lambda self, o: mul(o, self)
    __truediv__ = lambda self, o: div(self, o)
    __rtruediv__ = lambda self, o: div(o, self)
    __matmul__ = lambda self, o: matmul(self, o)
    __neg__ = lambda self: neg(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Ordered record of primitive applications.

    Use as a context manager; nested tapes shadow outer ones.
    """

    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc):
        _tape_stack().remove(self)
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, out, inputs, vjp):
        self.nodes.append((out, inputs, vjp))

    def clear(self):
        self.nodes = []

    def backward(self, loss, params=None):
        """Return ``{leaf tensor: gradient array}`` for ``loss`` and clear the tape.

        Leaves are tensors with ``requires_grad`` that were consumed by a
        recorded primitive without being produced by one. When ``params`` is
        given the result holds exactly those tensors, zero-filled if ``loss``
        does not depend on them. Gradients are also stored on ``.grad``.
        """
        loss = as_tensor(loss)
        if loss.size != 1:
            raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        produced = set()
        leaves = {}
        for out, inputs, vjp in reversed(self.nodes):
            produced.add(id(out))
            g = grads.pop(id(out), None)
            if g is None:
                continue
            for t, gi in zip(inputs, vjp(g)):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if key in grads:
                    grads[key] = grads[key] + gi
                else:
                    grads[key] = gi
                leaves[key] = t
        result = {}
        for key, t in leaves.items():
            if key not in produced and key in grads:
                result[t] = grads[key]
        self.clear()
        if params is not None:
            result = {p: result.get(p, np.zeros_like(p.data)) for p in params}
        for t, g in result.items():
            t.grad = g
        return result


def backward(loss, params=None):
    """Backpropagate through the innermost active tape."""
    stack = _tape_stack()
    if not stack:
        raise RuntimeError("backward: no active tape")
    return stack[-1].backward(loss, params)


def _emit(data, inputs, vjp):
    out = Tensor(data)
    stack = getattr(_state, "stack", None)
    if stack:
        for t in inputs:
            if t.requires_grad:
                out.requires_grad = True
                stack[-1].record(out, inputs, vjp)
                break
    return out


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# elementwise arithmetic -----------------------------------------------------

def _binary(name, fn, a, b):
    try:
        return fn(a.data, b.data)
    except ValueError:
        raise ShapeError(f"{name}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _emit(_binary("add", np.add, a, b), (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    sa, sb = a.shape, b.shape
    return _emit(_binary("sub", np.subtract, a, b), (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    return _emit(_binary("mul", np.multiply, a, b), (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)))


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    ad, bd = a.data, b.data
    out = _binary("div", np.divide, a, b)
    return _emit(out, (a, b),
                 lambda g: (_unbroadcast(g / bd, ad.shape),
                            _unbroadcast(-g * out / bd, bd.shape)))


def neg(a):
    a = as_tensor(a)
    return _emit(-a.data, (a,), lambda g: (-g,))


def matmul(a, b):
    """Matrix product over the last two axes, batch axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    ad, bd = a.data, b.data

    def vjp(g):
        ga = np.matmul(g, np.swapaxes(bd, -1, -2))
        gb = np.matmul(np.swapaxes(ad, -1, -2), g)
        return _unbroadcast(ga, ad.shape), _unbroadcast(gb, bd.shape)

    return _emit(np.matmul(ad, bd), (a, b), vjp)


# reductions and shape manipulation ------------------------------------------

def sum_(a, axis=None, keepdims=False):
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _emit(a.data.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    n = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(sum_(a, axis, keepdims), 1.0 / n)


def reshape(a, shape):
    a = as_tensor(a)
    old = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {old} to {shape}") from None
    return _emit(out, (a,), lambda g: (g.reshape(old),))


def transpose(a, axes=None):
    a = as_tensor(a)
    inv = None if axes is None else np.argsort(axes)
    return _emit(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        out = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat: incompatible shapes "
                         + ", ".join(str(t.shape) for t in tensors)) from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _emit(out, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=axis)))


def slice_last(a, start, stop):
    """``a[..., start:stop]``."""
    a = as_tensor(a)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        out[..., start:stop] = g
        return (out,)

    return _emit(a.data[..., start:stop], (a,), vjp)


def take(a, index):
    """Rows ``a[index]`` along axis 0."""
    a = as_tensor(a)
    index = np.asarray(index, dtype=np.intp)
    n = a.shape[0]
    if index.size and (index.min() < 0 or index.max() >= n):
        raise ShapeError(f"take: index out of range for axis of length {n}")

    def vjp(g):
        out = np.zeros((n,) + g.shape[1:])
        np.add.at(out, index, g)
        return (out,)

    return _emit(a.data[index], (a,), vjp)


# segment reductions -----------------------------------------------------------

def _check_segments(name, values, segments, n):
    segments = np.asarray(segments, dtype=np.intp)
    if segments.ndim != 1 or segments.shape[0] != values.shape[0]:
        raise ShapeError(f"{name}: segments shape {segments.shape} does not match "
                         f"values shape {values.shape}")
    if segments.size and (segments.min() < 0 or segments.max() >= n):
        raise ShapeError(f"{name}: segment id out of range [0, {n})")
    return segments


def segment_sum(values, segments, n):
    values = as_tensor(values)
    segments = _check_segments("segment_sum", values, segments, n)
    out = np.zeros((n,) + values.shape[1:])
    np.add.at(out, segments, values.data)
    return _emit(out, (values,), lambda g: (g[segments],))


def segment_counts(segments, n):
    return np.bincount(np.asarray(segments, dtype=np.intp), minlength=n).astype(np.float64)


def segment_mean(values, segments, n):
    """Mean per segment; empty segments give 0."""
    values = as_tensor(values)
    counts = np.maximum(segment_counts(segments, n), 1.0)
    scale = (1.0 / counts).reshape((n,) + (1,) * (values.ndim - 1))
    return mul(segment_sum(values, segments, n), scale)


def segment_max(values, segments, n):
    """Max per segment; empty segments give 0. Ties share the gradient."""
    values = as_tensor(values)
    segments = _check_segments("segment_max", values, segments, n)
    vd = values.data
    out = np.full((n,) + vd.shape[1:], -np.inf)
    np.maximum.at(out, segments, vd)
    empty = np.isneginf(out)
    out[empty] = 0.0
    hit = (vd == out[segments]) & ~empty[segments]
    ties = np.zeros_like(out)
    np.add.at(ties, segments, hit)

    def vjp(g):
        share = np.where(ties > 0, g / np.maximum(ties, 1.0), 0.0)
        return (share[segments] * hit,)

    return _emit(out, (values,), vjp)


def segment_softmax(scores, segments, n):
    """Softmax over entries that share a segment id."""
    scores = as_tensor(scores)
    segments = _check_segments("segment_softmax", scores, segments, n)
    sd = scores.data
    peak = np.full((n,) + sd.shape[1:], -np.inf)
    np.maximum.at(peak, segments, sd)
    ex = np.exp(sd - peak[segments])
    total = np.zeros_like(peak)
    np.add.at(total, segments, ex)
    y = ex / total[segments]

    def vjp(g):
        gy = g * y
        s = np.zeros_like(peak)
        np.add.at(s, segments, gy)
        return (gy - y * s[segments],)

    return _emit(y, (scores,), vjp)


def masked_softmax(x, mask, axis=-1):
    """Softmax along ``axis`` restricted to ``mask``; masked entries are 0."""
    x = as_tensor(x)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    z = np.where(mask, x.data, -np.inf)
    peak = z.max(axis=axis, keepdims=True)
    peak = np.where(np.isfinite(peak), peak, 0.0)
    ex = np.where(mask, np.exp(z - peak), 0.0)
    total = ex.sum(axis=axis, keepdims=True)
    y = np.divide(ex, total, out=np.zeros_like(ex), where=total > 0)

    def vjp(g):
        gy = g * y
        return (gy - y * gy.sum(axis=axis, keepdims=True),)

    return _emit(y, (x,), vjp)


def masked_max(x, mask, axis):
    """Max along ``axis`` over masked-in entries; all-masked slices give 0."""
    x = as_tensor(x)
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    z = np.where(mask, x.data, -np.inf)
    out = z.max(axis=axis, keepdims=True)
    empty = np.isneginf(out)
    out = np.where(empty, 0.0, out)
    hit = (z == out) & mask & ~empty
    ties = np.maximum(hit.sum(axis=axis, keepdims=True), 1)

    def vjp(g):
        return (np.expand_dims(g, axis) * hit / ties,)

    return _emit(np.squeeze(out, axis=axis), (x,), vjp)


# pointwise nonlinearities ----------------------------------------------------

def _unary(a, fwd, dfdx):
    a = as_tensor(a)
    x = a.data
    y = fwd(x)
    return _emit(y, (a,), lambda g: (g * dfdx(x, y),))


def _sigmoid(x):
    return np.exp(-np.logaddexp(0.0, -x))


def sigmoid(a):
    return _unary(a, _sigmoid, lambda x, y: y * (1.0 - y))


def tanh(a):
    return _unary(a, np.tanh, lambda x, y: 1.0 - y * y)


def relu(a):
    return _unary(a, lambda x: np.maximum(x, 0.0), lambda x, y: (x > 0).astype(np.float64))


def identity(a):
    return as_tensor(a)


def softplus(a):
    return _unary(a, lambda x: np.logaddexp(0.0, x), lambda x, y: _sigmoid(x))


def leaky_relu(a, slope=LEAKY_SLOPE):
    return _unary(a, lambda x: np.where(x > 0, x, slope * x),
                  lambda x, y: np.where(x > 0, 1.0, slope))


def relu6(a):
    return _unary(a, lambda x: np.clip(x, 0.0, 6.0),
                  lambda x, y: ((x > 0) & (x < 6)).astype(np.float64))


def elu(a):
    return _unary(a, lambda x: np.where(x > 0, x, np.expm1(np.minimum(x, 0.0))),
                  lambda x, y: np.where(x > 0, 1.0, y + 1.0))


def exp(a):
    return _unary(a, np.exp, lambda x, y: y)


def log(a):
    return _unary(a, np.log, lambda x, y: 1.0 / x)


def sqrt(a):
    return _unary(a, np.sqrt, lambda x, y: 0.5 / y)


def abs_(a):
    return _unary(a, np.abs, lambda x, y: np.sign(x))


def square(a):
    return _unary(a, np.square, lambda x, y: 2.0 * x)


ACTIVATIONS = {
    "sigmoid": sigmoid,
    "tanh": tanh,
    "relu": relu,
    "linear": identity,
    "softplus": softplus,
    "leakyrelu": leaky_relu,
    "relu6": relu6,
    "elu": elu,
}

PRIMITIVES = {
    "add": add, "sub": sub, "mul": mul, "div": div, "neg": neg,
    "matmul": matmul, "sum": sum_, "mean": mean, "reshape": reshape,
    "transpose": transpose, "concat": lambda *ts, axis=-1: concat(ts, axis),
    "take": take, "slice_last": slice_last, "segment_sum": segment_sum, "segment_mean": segment_mean,
    "segment_max": segment_max, "segment_softmax": segment_softmax,
    "masked_softmax": masked_softmax, "masked_max": masked_max,
    "exp": exp, "log": log, "sqrt": sqrt, "abs": abs_, "square": square,
    **ACTIVATIONS,
}


def forward_primitive(op, *inputs, **attrs):
    """Apply the primitive registered under ``op``."""
    try:
        fn = PRIMITIVES[op]
    except KeyError:
        raise KeyError(f"unknown primitive {op!r}") from None
    return fn(*inputs, **attrs)
