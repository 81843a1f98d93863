import numpy as np

from app.errors import ConfigError, ShapeError
from app.nn.module import Module, uniform
from app.tensor import ops


DEFAULT_EPSILON = 0.05


class DomainProportionLayer(Module):
    """Smoothed softmax D(x) = (1 - ε)·softmax(R x) + ε/k.

    Every entry lies in [ε/k, 1 - ε + ε/k], so -log D_J(x) stays bounded.
    """

    def __init__(self, k, d, rng, epsilon=DEFAULT_EPSILON):
        super().__init__()
        if not 0.0 < epsilon < 1.0:
            raise ConfigError("mixing.epsilon", "must be in (0, 1)")
        self.k, self.d, self.epsilon = k, d, epsilon
        self.R = uniform(rng, (k, d), d)

    def __call__(self, x):
        if x.shape[-1] != self.d:
            raise ShapeError("domain_proportion", x.shape, self.R.shape)
        logits = ops.matmul(x, ops.transpose(self.R, (1, 0)))
        smoothed = ops.scale(ops.softmax(logits, axis=-1), 1.0 - self.epsilon)
        return ops.add(smoothed, ops.as_tensor(np.full((self.k,), self.epsilon / self.k)))

    def bounds(self):
        floor = self.epsilon / self.k
        return floor, 1.0 - self.epsilon + floor


def domain_proportion(x, R, epsilon=DEFAULT_EPSILON):
    """D(x) for one d-vector (or a stack of them) with plain arrays."""
    x = np.asarray(x, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    if x.shape[-1] != R.shape[1]:
        raise ShapeError("domain_proportion", x.shape, R.shape)
    logits = x @ R.T
    logits = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(logits)
    return (1.0 - epsilon) * e / e.sum(axis=-1, keepdims=True) + epsilon / R.shape[0]
