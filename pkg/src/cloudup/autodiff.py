"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Tape records every op executed while it is active (ops still work with
no tape, they just aren't recorded). Tape order is already topological,
so the backward pass is a single reverse sweep with gradient accumulation
keyed by tensor identity. The op set is exactly what the upsampling
network and losses need; everything is float64.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError

_TAPE_STACK = []


class Tensor:
    """A node in the computation graph. Wraps a float64 ndarray."""

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = np.asarray(data, dtype=np.float64)

    @property
    def shape(self):
        return self.data.shape

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


class Tape:
    """Context manager recording ops for a later backward sweep."""

    def __init__(self):
        self.nodes = []  # (output, inputs tuple, backward fn)

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        popped = _TAPE_STACK.pop()
        assert popped is self
        return False


def _record(out, inputs, backward_fn):
    if _TAPE_STACK:
        _TAPE_STACK[-1].nodes.append((out, inputs, backward_fn))
    return out


def _unbroadcast(grad, shape):
    """Sum a gradient down to the shape the operand actually had."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def tensor(data):
    return Tensor(data)


def add(a, b):
    out = Tensor(a.data + b.data)

    def backward(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record(out, (a, b), backward)


def sub(a, b):
    out = Tensor(a.data - b.data)

    def backward(g):
        return _unbroadcast(g, a.data.shape), -_unbroadcast(g, b.data.shape)

    return _record(out, (a, b), backward)


def mul(a, b):
    out = Tensor(a.data * b.data)

    def backward(g):
        return (_unbroadcast(g * b.data, a.data.shape),
                _unbroadcast(g * a.data, b.data.shape))

    return _record(out, (a, b), backward)


def scale(a, c):
    c = float(c)
    out = Tensor(a.data * c)

    def backward(g):
        return (g * c,)

    return _record(out, (a,), backward)


def matmul(a, b):
    if a.data.ndim not in (2, 3) or b.data.ndim != a.data.ndim:
        raise ShapeError(
            f"matmul supports 2D@2D or batched 3D@3D, got "
            f"{a.data.shape} @ {b.data.shape}")
    out = Tensor(a.data @ b.data)

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return ga, gb

    return _record(out, (a, b), backward)


def concat(tensors, axis=0):
    tensors = list(tensors)
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _record(out, tuple(tensors), backward)


def gather(a, indices, axis=0):
    """Select slices along an axis by an integer index array.

    Backward scatter-adds, so repeated indices accumulate. Along axis 0
    the index array may have any rank; other axes take 1-D indices.
    """
    idx = np.asarray(indices, dtype=np.int64)
    if axis != 0 and idx.ndim != 1:
        raise ShapeError("gather with axis != 0 requires 1-D indices")
    out = Tensor(np.take(a.data, idx, axis=axis))

    def backward(g):
        ga = np.zeros_like(a.data)
        if axis == 0:
            np.add.at(ga, idx, g)
        else:
            np.add.at(np.moveaxis(ga, axis, 0), idx, np.moveaxis(g, axis, 0))
        return (ga,)

    return _record(out, (a,), backward)


def reduce_sum(a, axis=None, keepdims=False):
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        gx = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gx, a.data.shape).copy(),)

    return _record(out, (a,), backward)


def reduce_mean(a, axis=None, keepdims=False):
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims))
    count = a.data.size if axis is None else a.data.shape[axis]

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.data.shape).copy(),)
        gx = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gx / count, a.data.shape).copy(),)

    return _record(out, (a,), backward)


def reduce_max(a, axis):
    """Max along one axis. Ties send the whole gradient to the first
    (smallest-index) maximizer, matching argmax."""
    out = Tensor(a.data.max(axis=axis))
    arg = np.argmax(a.data, axis=axis)

    def backward(g):
        ga = np.zeros_like(a.data)
        idx = list(np.indices(arg.shape))
        idx.insert(axis if axis >= 0 else a.data.ndim + axis, arg)
        ga[tuple(idx)] = g
        return (ga,)

    return _record(out, (a,), backward)


def relu(a):
    out = Tensor(np.maximum(a.data, 0.0))
    mask = a.data > 0

    def backward(g):
        return (g * mask,)

    return _record(out, (a,), backward)


def softmax(a, axis=-1):
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(s)

    def backward(g):
        inner = (g * s).sum(axis=axis, keepdims=True)
        return (s * (g - inner),)

    return _record(out, (a,), backward)


def sqrt(a):
    if np.any(a.data < 0):
        raise ContractError("sqrt of a negative value")
    r = np.sqrt(a.data)
    out = Tensor(r)

    def backward(g):
        # subgradient 0 at exactly 0 keeps ball-distance terms finite
        safe = np.where(r == 0.0, np.inf, r)
        return (g * 0.5 / safe,)

    return _record(out, (a,), backward)


def absolute(a):
    out = Tensor(np.abs(a.data))
    sign = np.sign(a.data)

    def backward(g):
        return (g * sign,)

    return _record(out, (a,), backward)


def reshape(a, shape):
    out = Tensor(a.data.reshape(shape))

    def backward(g):
        return (g.reshape(a.data.shape),)

    return _record(out, (a,), backward)


def transpose(a, axes=None):
    out = Tensor(np.transpose(a.data, axes))

    def backward(g):
        if axes is None:
            return (np.transpose(g),)
        inverse = np.argsort(axes)
        return (np.transpose(g, inverse),)

    return _record(out, (a,), backward)


def broadcast_to(a, shape):
    out = Tensor(np.broadcast_to(a.data, shape).copy())

    def backward(g):
        return (_unbroadcast(g, a.data.shape),)

    return _record(out, (a,), backward)


def backward(tape, loss, params=None):
    """Reverse sweep from a scalar loss.

    With params (a name -> Tensor dict) returns name -> gradient, filling
    zeros for parameters the loss never touched. Without params returns
    a dict keyed by id(tensor) for every tensor reached.
    """
    if loss.data.size != 1:
        raise ContractError(f"loss must be scalar, got shape {loss.data.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    for out, inputs, backward_fn in reversed(tape.nodes):
        g = grads.get(id(out))
        if g is None:
            continue
        for inp, gi in zip(inputs, backward_fn(g)):
            if gi is None:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    if params is None:
        return grads
    return {
        name: grads.get(id(t), np.zeros_like(t.data)).reshape(t.data.shape)
        for name, t in params.items()
    }


@dataclass
class GradcheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: tuple
    passed: bool
    tolerance: float


def gradcheck(f, params, tolerance=1e-6, h=1e-5):
    """Compare tape gradients of f() against central differences.

    f is a zero-argument callable returning a scalar Tensor; it must read
    the parameter Tensors in params. Every parameter entry is perturbed.
    Relative error is |ga - gn| / max(1, |ga|, |gn|).
    """
    with Tape() as tape:
        loss = f()
    analytic = backward(tape, loss, params)

    worst = (0.0, "", ())
    for name, t in params.items():
        flat = t.data.reshape(-1)
        ga_flat = analytic[name].reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = f().item()
            flat[i] = keep - h
            down = f().item()
            flat[i] = keep
            gn = (up - down) / (2.0 * h)
            ga = ga_flat[i]
            rel = abs(ga - gn) / max(1.0, abs(ga), abs(gn))
            if rel > worst[0]:
                worst = (rel, name, np.unravel_index(i, t.data.shape))
    return GradcheckReport(
        max_rel_error=worst[0],
        worst_param=worst[1],
        worst_index=tuple(int(v) for v in worst[2]),
        passed=worst[0] < tolerance,
        tolerance=tolerance,
    )


class Adam:
    """Adam with bias correction; state is keyed by parameter name."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        """Update param Tensors in place from a name -> gradient dict."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for name in sorted(params):
            g = grads[name]
            m = self.m.get(name)
            if m is None:
                m = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * (g * g)
            self.m[name] = m
            self.v[name] = v
            m_hat = m / (1 - b1 ** self.t)
            v_hat = v / (1 - b2 ** self.t)
            params[name].data -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
