from functools import lru_cache

import numpy as np

from app.errors import ConfigError, ShapeError
from app.tensor import ops


def positional_encoding(pos, d):
    """Sinusoidal position vector: sin on even entries, cos on odd ones."""
    out = np.zeros(d)
    for i in range(0, d, 2):
        angle = pos / (10000.0 ** (i / d))
        out[i] = np.sin(angle)
        if i + 1 < d:
            out[i + 1] = np.cos(angle)
    return out


@lru_cache(maxsize=64)
def positional_table(length, d):
    return np.stack([positional_encoding(pos, d) for pos in range(length)]) if length else np.zeros((0, d))


def causal_mask(length):
    """True above the diagonal: position t may not see t' > t."""
    return np.triu(np.ones((length, length), dtype=bool), k=1)


def attention(q, k, v, blocked=None, dropout_rate=0.0, rng=None, training=False):
    """softmax(Q Kᵀ / √d') V over the last two axes.

    `blocked` is a boolean mask broadcastable to (..., ℓ_q, ℓ_k); True keys
    are excluded. Returns the output and the attention weights.
    """
    if q.shape[-1] != k.shape[-1] or k.shape[-2] != v.shape[-2]:
        raise ShapeError("attention", q.shape, k.shape, v.shape)
    axes = tuple(range(k.ndim - 2)) + (k.ndim - 1, k.ndim - 2)
    scores = ops.scale(ops.matmul(q, ops.transpose(k, axes)), 1.0 / np.sqrt(q.shape[-1]))
    if blocked is None:
        weights = ops.softmax(scores, axis=-1)
    else:
        weights = ops.masked_softmax(scores, blocked, axis=-1)
    weights = ops.dropout(weights, dropout_rate, rng, training=training)
    return ops.matmul(weights, v), weights


def split_heads(x, heads):
    batch, length, d = x.shape
    return ops.transpose(ops.reshape(x, (batch, length, heads, d // heads)), (0, 2, 1, 3))


def merge_heads(x):
    batch, heads, length, head_dim = x.shape
    return ops.reshape(ops.transpose(x, (0, 2, 1, 3)), (batch, length, heads * head_dim))


def attend_heads(q, k, v, heads, blocked=None, dropout_rate=0.0, rng=None, training=False):
    """Per-head attention on already projected (B, ℓ, d) inputs; returns the
    concatenated head outputs, still before W_O."""
    if q.shape[-1] % heads:
        raise ConfigError("model.heads", f"d={q.shape[-1]} is not divisible by heads={heads}")
    if blocked is not None:
        blocked = np.asarray(blocked, dtype=bool)
        if blocked.ndim == 3:
            blocked = blocked[:, None, :, :]
    out, _ = attention(
        split_heads(q, heads), split_heads(k, heads), split_heads(v, heads),
        blocked=blocked, dropout_rate=dropout_rate, rng=rng, training=training,
    )
    return merge_heads(out)


def multi_head(query, key, value, w_q, w_k, w_v, w_o, heads, blocked=None):
    """Concat(H_1..H_m) W_O, where head i uses column block i of each d×d
    projection matrix."""
    q = ops.matmul(query, w_q)
    k = ops.matmul(key, w_k)
    v = ops.matmul(value, w_v)
    return ops.matmul(attend_heads(q, k, v, heads, blocked=blocked), w_o)


def ffn(x, w1, b1, w2, b2):
    return ops.add(ops.matmul(ops.relu(ops.add(ops.matmul(x, w1), b1)), w2), b2)
