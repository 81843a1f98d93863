"""Encoder-decoder Transformer whose point-wise projections are either plain
linears or domain-mixed ones, chosen per stack by the mixing scope."""
from dataclasses import dataclass

import numpy as np

from app.mixing.context import MixingContext
from app.mixing.mixed import MixedLinear
from app.mixing.proportion import DomainProportionLayer
from app.models import MixingConfig
from app.nn import functional as F
from app.nn.layers import Embedding, FeedForward, LayerNorm, Linear, MultiHeadAttention, scaled_embedding
from app.nn.module import Module, ModuleList
from app.tensor import Tensor, ops


@dataclass
class EncoderState:
    hidden: Tensor
    mask: np.ndarray


@dataclass
class DecoderOutput:
    logits: Tensor
    hidden: Tensor


def projection_factory(mixed, k, epsilon, rng):
    def make_linear(d_in, d_out, routed=True):
        if not mixed:
            return Linear(d_in, d_out, rng)
        router = DomainProportionLayer(k, d_in, rng, epsilon) if routed else None
        return MixedLinear(k, d_in, d_out, rng, router=router)
    return make_linear


class EncoderLayer(Module):
    def __init__(self, config, mixed, k, epsilon, rng):
        super().__init__()
        make_linear = projection_factory(mixed, k, epsilon, rng)
        self.pre_norm = config.layer_norm == "pre"
        self.self_attn = MultiHeadAttention(config.d, config.heads, make_linear, config.dropout)
        router = DomainProportionLayer(k, config.d, rng, epsilon) if mixed else None
        self.ffn = FeedForward(config.d, config.d_ff, make_linear, config.dropout, router=router)
        self.norm1 = LayerNorm(config.d)
        self.norm2 = LayerNorm(config.d)

    def __call__(self, x, blocked, mask, context, rng):
        if self.pre_norm:
            h = self.norm1(x)
            x = ops.add(x, self.self_attn(h, h, blocked, mask, mask, context, "self", rng))
            return ops.add(x, self.ffn(self.norm2(x), context, mask, rng))
        x = self.norm1(ops.add(x, self.self_attn(x, x, blocked, mask, mask, context, "self", rng)))
        return self.norm2(ops.add(x, self.ffn(x, context, mask, rng)))


class DecoderLayer(Module):
    def __init__(self, config, mixed, k, epsilon, rng):
        super().__init__()
        make_linear = projection_factory(mixed, k, epsilon, rng)
        self.pre_norm = config.layer_norm == "pre"
        self.self_attn = MultiHeadAttention(config.d, config.heads, make_linear, config.dropout)
        self.cross_attn = MultiHeadAttention(config.d, config.heads, make_linear, config.dropout)
        router = DomainProportionLayer(k, config.d, rng, epsilon) if mixed else None
        self.ffn = FeedForward(config.d, config.d_ff, make_linear, config.dropout, router=router)
        self.norm1 = LayerNorm(config.d)
        self.norm2 = LayerNorm(config.d)
        self.norm3 = LayerNorm(config.d)

    def __call__(self, y, memory, self_blocked, cross_blocked, mask, memory_mask, context, rng):
        if self.pre_norm:
            h = self.norm1(y)
            y = ops.add(y, self.self_attn(h, h, self_blocked, mask, mask, context, "self", rng))
            h = self.norm2(y)
            y = ops.add(y, self.cross_attn(h, memory, cross_blocked, mask, memory_mask, context, "cross", rng))
            return ops.add(y, self.ffn(self.norm3(y), context, mask, rng))
        y = self.norm1(ops.add(y, self.self_attn(y, y, self_blocked, mask, mask, context, "self", rng)))
        y = self.norm2(ops.add(y, self.cross_attn(y, memory, cross_blocked, mask, memory_mask, context, "cross", rng)))
        return self.norm3(ops.add(y, self.ffn(y, context, mask, rng)))


class Transformer(Module):
    """p(y_t | y_<t, x) = softmax(G_t W_out): embeddings with sinusoidal
    positions, L_enc encoder layers, L_dec decoder layers."""

    def __init__(self, config, mixing=None, seed=0):
        super().__init__()
        mixing = mixing or MixingConfig(scope="none", k=1)
        self.config = config
        self.mixing = mixing
        rng = np.random.default_rng(seed)
        self.embedding = Embedding(config.vocab_size, config.d, rng)
        self.encoder = ModuleList(
            EncoderLayer(config, mixing.encoder_mixed, mixing.k, mixing.epsilon, rng) for _ in range(config.enc_layers)
        )
        self.decoder = ModuleList(
            DecoderLayer(config, mixing.decoder_mixed, mixing.k, mixing.epsilon, rng) for _ in range(config.dec_layers)
        )
        if config.layer_norm == "pre":
            self.enc_norm = LayerNorm(config.d)
            self.dec_norm = LayerNorm(config.d)
        self.output = Linear(config.d, config.vocab_size, rng)

    @property
    def is_mixed(self):
        return self.mixing.scope != "none"

    def _embed(self, ids):
        return scaled_embedding(self.embedding, ids, self.config.d, positional=self.config.positional)

    def encode(self, src, src_mask, context=None, rng=None):
        context = context if context is not None else MixingContext()
        src_mask = np.asarray(src_mask, dtype=bool)
        blocked = ~src_mask[:, None, None, :]
        x = self._embed(src)
        for i, layer in enumerate(self.encoder):
            x = layer(x, blocked, src_mask, context.at("enc", i), rng)
        if self.config.layer_norm == "pre":
            x = self.enc_norm(x)
        return EncoderState(hidden=x, mask=src_mask)

    def decode(self, tgt_in, tgt_mask, state, context=None, rng=None):
        context = context if context is not None else MixingContext()
        tgt_mask = np.asarray(tgt_mask, dtype=bool)
        length = tgt_in.shape[1]
        self_blocked = F.causal_mask(length)[None, None, :, :] | ~tgt_mask[:, None, None, :]
        cross_blocked = ~state.mask[:, None, None, :]
        y = self._embed(tgt_in)
        for i, layer in enumerate(self.decoder):
            y = layer(y, state.hidden, self_blocked, cross_blocked, tgt_mask, state.mask, context.at("dec", i), rng)
        if self.config.layer_norm == "pre":
            y = self.dec_norm(y)
        return DecoderOutput(logits=self.output(y), hidden=y)

    def __call__(self, batch, context=None, rng=None):
        context = context if context is not None else MixingContext()
        state = self.encode(batch.src, batch.src_mask, context, rng)
        tgt_in = batch.decoder_input
        return self.decode(tgt_in, batch.tgt_mask[:, :-1], state, context, rng)
