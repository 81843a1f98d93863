"""Primitive ops with their backward rules.

Shapes are explicit: the only implicit broadcast is a bias (trailing-shape
operand) added over leading batch/time axes. Everything else goes through
`expand`.
"""
import builtins

import numpy as np

from app.errors import AttentionMaskError, ShapeError
from app.tensor.engine import Function, Tensor, active_detached_values, get_default_dtype, is_grad_scaling_enabled


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=get_default_dtype()))


def _sum_to(grad, shape):
    """Reduce a broadcast gradient back onto `shape` (leading axes / size-1 axes)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Add(Function):
    def forward(self, a, b):
        if a.shape != b.shape and (b.ndim > a.ndim or a.shape[a.ndim - b.ndim:] != b.shape):
            raise ShapeError("add", a.shape, b.shape)
        self.b_shape = b.shape
        return a + b

    def backward(self, grad):
        return grad, _sum_to(grad, self.b_shape)


class Mul(Function):
    def forward(self, a, b):
        if a.shape != b.shape:
            raise ShapeError("mul", a.shape, b.shape)
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return grad * self.b, grad * self.a


class Scale(Function):
    def forward(self, a, factor):
        self.factor = factor
        return a * factor

    def backward(self, grad):
        return (grad * self.factor,)


class MatMul(Function):
    def forward(self, a, b):
        shared = b.ndim == 2
        if a.ndim < 2 or a.shape[-1] != b.shape[-2] or (not shared and a.shape[:-2] != b.shape[:-2]):
            raise ShapeError("matmul", a.shape, b.shape)
        self.a, self.b, self.shared = a, b, shared
        return np.matmul(a, b)

    def backward(self, grad):
        grad_a = np.matmul(grad, np.swapaxes(self.b, -1, -2))
        if self.shared:
            flat_a = self.a.reshape(-1, self.a.shape[-1])
            grad_b = flat_a.T @ grad.reshape(-1, grad.shape[-1])
        else:
            grad_b = np.matmul(np.swapaxes(self.a, -1, -2), grad)
        return grad_a, grad_b


class Softmax(Function):
    def forward(self, x, axis):
        self.axis = axis
        shifted = x - x.max(axis=axis, keepdims=True)
        e = np.exp(shifted)
        self.y = e / e.sum(axis=axis, keepdims=True)
        return self.y

    def backward(self, grad):
        y = self.y
        return (y * (grad - (grad * y).sum(axis=self.axis, keepdims=True)),)


class LogSoftmax(Function):
    def forward(self, x, axis):
        self.axis = axis
        shifted = x - x.max(axis=axis, keepdims=True)
        log_norm = np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        self.y = shifted - log_norm
        return self.y

    def backward(self, grad):
        return (grad - np.exp(self.y) * grad.sum(axis=self.axis, keepdims=True),)


class Log(Function):
    def forward(self, x):
        self.x = x
        return np.log(x)

    def backward(self, grad):
        return (grad / self.x,)


class Exp(Function):
    def forward(self, x):
        self.y = np.exp(x)
        return self.y

    def backward(self, grad):
        return (grad * self.y,)


class ReLU(Function):
    def forward(self, x):
        self.positive = x > 0
        return np.where(self.positive, x, 0.0).astype(x.dtype, copy=False)

    def backward(self, grad):
        return (np.where(self.positive, grad, 0.0).astype(grad.dtype, copy=False),)


class Sum(Function):
    def forward(self, x, axis, keepdims):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        return x.sum(axis=axis, keepdims=keepdims)

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Mean(Function):
    def forward(self, x, axis, keepdims):
        self.shape, self.axis, self.keepdims = x.shape, axis, keepdims
        self.count = x.size if axis is None else np.prod([x.shape[a] for a in np.atleast_1d(axis)])
        return x.mean(axis=axis, keepdims=keepdims)

    def backward(self, grad):
        if self.axis is not None and not self.keepdims:
            grad = np.expand_dims(grad, self.axis)
        return (np.broadcast_to(grad / self.count, self.shape).copy(),)


class Concat(Function):
    def forward(self, *arrays, axis):
        reference = list(arrays[0].shape)
        for array in arrays[1:]:
            other = list(array.shape)
            if len(other) != len(reference) or any(
                i != axis % len(reference) and x != y for i, (x, y) in enumerate(zip(reference, other))
            ):
                raise ShapeError("concat", arrays[0].shape, array.shape)
        self.axis = axis
        self.bounds = np.cumsum([array.shape[axis] for array in arrays])[:-1]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        return tuple(np.split(grad, self.bounds, axis=self.axis))


class Slice(Function):
    def forward(self, x, index):
        self.shape, self.index = x.shape, index
        return x[index]

    def backward(self, grad):
        full = np.zeros(self.shape, dtype=grad.dtype)
        index = self.index if isinstance(self.index, tuple) else (self.index,)
        if all(isinstance(part, (builtins.slice, int, type(Ellipsis))) for part in index):
            full[self.index] = grad
        else:
            np.add.at(full, self.index, grad)
        return (full,)


class Transpose(Function):
    def forward(self, x, axes):
        self.axes = tuple(axes) if axes is not None else tuple(reversed(range(x.ndim)))
        return np.transpose(x, self.axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


class Reshape(Function):
    def forward(self, x, shape):
        self.shape = x.shape
        try:
            return x.reshape(shape)
        except ValueError:
            raise ShapeError("reshape", x.shape, shape) from None

    def backward(self, grad):
        return (grad.reshape(self.shape),)


class Expand(Function):
    def forward(self, x, shape):
        self.shape = x.shape
        try:
            return np.broadcast_to(x, shape)
        except ValueError:
            raise ShapeError("expand", x.shape, shape) from None

    def backward(self, grad):
        return (_sum_to(grad, self.shape),)


class EmbeddingLookup(Function):
    def forward(self, table, ids):
        if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
            raise ShapeError("embedding_lookup", table.shape, ids.shape)
        self.table_shape, self.ids = table.shape, ids
        return table[ids]

    def backward(self, grad):
        full = np.zeros(self.table_shape, dtype=grad.dtype)
        np.add.at(full, self.ids, grad)
        return (full,)


class MaskedFill(Function):
    def forward(self, x, mask, value):
        try:
            self.mask = np.broadcast_to(mask, x.shape)
        except ValueError:
            raise ShapeError("masked_fill", x.shape, mask.shape) from None
        return np.where(self.mask, value, x).astype(x.dtype, copy=False)

    def backward(self, grad):
        return (np.where(self.mask, 0.0, grad).astype(grad.dtype, copy=False),)


class LayerNorm(Function):
    def forward(self, x, gain, bias, eps):
        if gain.shape != x.shape[-1:] or bias.shape != x.shape[-1:]:
            raise ShapeError("layer_norm", x.shape, gain.shape)
        mean = x.mean(axis=-1, keepdims=True)
        centered = x - mean
        var = (centered * centered).mean(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + eps)
        self.x_hat = centered * self.inv_std
        self.gain = gain
        return self.x_hat * gain + bias

    def backward(self, grad):
        grad_gain = _sum_to(grad * self.x_hat, self.gain.shape)
        grad_bias = _sum_to(grad, self.gain.shape)
        g = grad * self.gain
        grad_x = self.inv_std * (
            g - g.mean(axis=-1, keepdims=True) - self.x_hat * (g * self.x_hat).mean(axis=-1, keepdims=True)
        )
        return grad_x, grad_gain, grad_bias


class Dropout(Function):
    def forward(self, x, keep):
        self.keep = keep
        return x * keep

    def backward(self, grad):
        return (grad * self.keep,)


class ScaleGrad(Function):
    """Identity forward; the gradient is multiplied by a scalar or by a
    per-feature multiplier over the last axis (−1 reverses it)."""

    def forward(self, x, multiplier):
        self.multiplier = multiplier
        return x

    def backward(self, grad):
        return (grad * self.multiplier,)


def add(a, b):
    return Add.apply(a, b)


def mul(a, b):
    return Mul.apply(a, b)


def scale(a, factor):
    return Scale.apply(a, factor=float(factor))


def matmul(a, b):
    return MatMul.apply(a, b)


def softmax(x, axis=-1):
    return Softmax.apply(x, axis=axis)


def log_softmax(x, axis=-1):
    return LogSoftmax.apply(x, axis=axis)


def log(x):
    return Log.apply(x)


def exp(x):
    return Exp.apply(x)


def relu(x):
    return ReLU.apply(x)


def sum(x, axis=None, keepdims=False):
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x, axis=None, keepdims=False):
    return Mean.apply(x, axis=axis, keepdims=keepdims)


def concat(tensors, axis=-1):
    return Concat.apply(*tensors, axis=axis)


def slice(x, index):
    return Slice.apply(x, index=index)


def transpose(x, axes=None):
    return Transpose.apply(x, axes=axes)


def reshape(x, shape):
    return Reshape.apply(x, shape=tuple(shape))


def expand(x, shape):
    return Expand.apply(x, shape=tuple(shape))


def embedding_lookup(table, ids):
    return EmbeddingLookup.apply(table, ids=np.asarray(ids, dtype=np.int64))


def masked_fill(x, mask, value):
    return MaskedFill.apply(x, mask=np.asarray(mask, dtype=bool), value=value)


def layer_norm(x, gain, bias, eps=1e-5):
    return LayerNorm.apply(x, gain, bias, eps=eps)


def dropout(x, rate, rng, training=True):
    if not training or rate == 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return Dropout.apply(x, keep=keep)


def stop_gradient(x):
    """Same values, no tape edge: nothing upstream receives gradient through it."""
    store = active_detached_values()
    return Tensor(store.take(x.data) if store is not None else x.data)


def scale_grad(x, multiplier):
    if not is_grad_scaling_enabled():
        return x
    multiplier = np.asarray(multiplier, dtype=x.dtype)
    if multiplier.ndim and multiplier.shape != x.shape[-1:]:
        raise ShapeError("scale_grad", x.shape, multiplier.shape)
    return ScaleGrad.apply(x, multiplier=multiplier)


def reverse_grad(x):
    return scale_grad(x, -1.0)


def masked_softmax(logits, mask, axis=-1):
    """Softmax over positions where `mask` is False; a row with every key
    masked is a malformed batch and raises."""
    blocked = np.broadcast_to(np.asarray(mask, dtype=bool), logits.shape)
    if blocked.all(axis=axis).any():
        raise AttentionMaskError("Attention row with every key masked")
    return softmax(masked_fill(logits, blocked, -1e9), axis=axis)
