import numpy as np

from app.nn import functional as F
from app.nn.module import Module, ones, uniform, zeros
from app.tensor import ops


class Linear(Module):
    """Point-wise x W + b. Accepts the mixing arguments and ignores them so
    vanilla and mixed projections are interchangeable."""

    def __init__(self, d_in, d_out, rng, bias=True):
        super().__init__()
        self.d_in, self.d_out = d_in, d_out
        self.weight = uniform(rng, (d_in, d_out), d_in)
        self.bias = zeros((d_out,)) if bias else None

    def __call__(self, x, context=None, tag=None, token_mask=None):
        y = ops.matmul(x, self.weight)
        return ops.add(y, self.bias) if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, d, eps=1e-5):
        super().__init__()
        self.eps = eps
        self.gain = ones((d,))
        self.bias = zeros((d,))

    def __call__(self, x):
        return ops.layer_norm(x, self.gain, self.bias, eps=self.eps)


class Embedding(Module):
    def __init__(self, vocab_size, d, rng):
        super().__init__()
        self.table = uniform(rng, (vocab_size, d), d)

    def __call__(self, ids):
        return ops.embedding_lookup(self.table, ids)


class MultiHeadAttention(Module):
    def __init__(self, d, heads, make_linear, dropout):
        super().__init__()
        self.heads = heads
        self.dropout = dropout
        self.q = make_linear(d, d)
        self.k = make_linear(d, d)
        self.v = make_linear(d, d)
        self.o = make_linear(d, d)

    def __call__(self, query, memory, blocked, query_mask, memory_mask, context=None, kind="self", rng=None):
        q = self.q(query, context, f"{kind}_Q", query_mask)
        k = self.k(memory, context, f"{kind}_K", memory_mask)
        v = self.v(memory, context, f"{kind}_V", memory_mask)
        heads = F.attend_heads(
            q, k, v, self.heads, blocked=blocked, dropout_rate=self.dropout, rng=rng, training=self.training,
        )
        return self.o(heads, context, f"{kind}_O", query_mask)


class FeedForward(Module):
    """max(0, x W1 + b1) W2 + b2 per position. When the two linears are
    mixed they share the proportions computed from the block input."""

    def __init__(self, d, d_ff, make_linear, dropout, router=None):
        super().__init__()
        self.dropout = dropout
        if router is not None:
            self.router = router
        self.fc1 = make_linear(d, d_ff, routed=False)
        self.fc2 = make_linear(d_ff, d, routed=False)

    @property
    def mixed(self):
        return "router" in self._children

    def __call__(self, x, context=None, token_mask=None, rng=None):
        if not self.mixed:
            hidden = ops.relu(self.fc1(x))
            hidden = ops.dropout(hidden, self.dropout, rng, training=self.training)
            return self.fc2(hidden)
        proportions = context.route(self.router, x, "ffn", token_mask)
        hidden = ops.relu(self.fc1.apply(x, proportions))
        hidden = ops.dropout(hidden, self.dropout, rng, training=self.training)
        return self.fc2.apply(hidden, proportions)


def scaled_embedding(embedding, ids, d, positional=True):
    x = ops.scale(embedding(ids), np.sqrt(d))
    if not positional:
        return x
    table = F.positional_table(ids.shape[-1], d).astype(x.dtype)
    return ops.add(x, ops.as_tensor(table))
