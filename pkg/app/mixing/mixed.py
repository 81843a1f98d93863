import logging

import numpy as np

from app.errors import ConfigError, ShapeError, SimplexError
from app.models import DETACH_MODES
from app.nn.module import Module, parameter, uniform, zeros
from app.tensor import ops


logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-6


class MixedLinear(Module):
    """k per-domain point-wise transforms blended per token:
    Σ_j p_j (x W_j + b_j)."""

    def __init__(self, k, d_in, d_out, rng, router=None):
        super().__init__()
        self.k, self.d_in, self.d_out = k, d_in, d_out
        self.weight = parameter(np.stack([uniform(rng, (d_in, d_out), d_in).data for _ in range(k)]))
        self.bias = zeros((k, d_out))
        if router is not None:
            self.router = router

    def __call__(self, x, context=None, tag=None, token_mask=None):
        proportions = context.route(self.router, x, tag, token_mask)
        return self.apply(x, proportions)

    def apply(self, x, proportions):
        if x.shape[-1] != self.d_in or proportions.shape != x.shape[:-1] + (self.k,):
            raise ShapeError("mixed_linear", x.shape, proportions.shape, self.weight.shape)
        lead = x.shape[:-1]
        flat_weight = ops.reshape(ops.transpose(self.weight, (1, 0, 2)), (self.d_in, self.k * self.d_out))
        y = ops.add(ops.matmul(x, flat_weight), ops.reshape(self.bias, (self.k * self.d_out,)))
        y = ops.reshape(y, lead + (self.k, self.d_out))
        p = ops.expand(ops.reshape(proportions, lead + (self.k, 1)), lead + (self.k, self.d_out))
        return ops.sum(ops.mul(y, p), axis=-2)


def check_simplex(p, k=None, tolerance=SIMPLEX_TOLERANCE):
    p = np.asarray(p, dtype=np.float64)
    if k is not None and p.shape[-1] != k:
        raise SimplexError(f"Expected {k} proportions, got {p.shape[-1]}")
    if (p < -tolerance).any() or np.abs(p.sum(axis=-1) - 1.0).max(initial=0.0) > tolerance:
        raise SimplexError(f"Proportions {p.tolist()} are not a probability simplex")
    return p


def mixed_apply(x, weights, biases, p):
    """Output order: Σ_j p_j (xᵀ W_j + b_j) for one token."""
    weights = np.asarray(weights, dtype=np.float64)
    biases = np.asarray(biases, dtype=np.float64)
    p = check_simplex(p, k=weights.shape[0])
    x = np.asarray(x, dtype=np.float64)
    return sum(p[j] * (x @ weights[j] + biases[j]) for j in range(weights.shape[0]))


def mixed_apply_weight_order(x, weights, biases, p):
    """Weight order: xᵀ (Σ_j p_j W_j) + Σ_j p_j b_j."""
    weights = np.asarray(weights, dtype=np.float64)
    biases = np.asarray(biases, dtype=np.float64)
    p = check_simplex(p, k=weights.shape[0])
    mixed_weight = np.tensordot(p, weights, axes=1)
    mixed_bias = np.tensordot(p, biases, axes=1)
    return np.asarray(x, dtype=np.float64) @ mixed_weight + mixed_bias


def _check_mode(mode):
    if mode not in DETACH_MODES:
        raise ConfigError("train.detach_mode", f"unknown mode '{mode}', expected one of {DETACH_MODES}")


def gradient_multiplier(mode, d):
    """Per-feature multiplier applied to the L_mix gradient entering x."""
    _check_mode(mode)
    if mode == "advl":
        return -1.0
    if mode == "padvl":
        half = d // 2
        return np.concatenate([np.ones(half), -np.ones(d - half)])
    return 1.0


def router_input(x, mode):
    """Input of a proportion layer on the L_mix path.

    detached cuts every gradient into x; mtl lets it through; advl reverses
    it; padvl passes the first half of the features and reverses the rest.
    """
    _check_mode(mode)
    if mode == "detached":
        return ops.stop_gradient(x)
    if mode == "mtl":
        return x
    return ops.scale_grad(x, gradient_multiplier(mode, x.shape[-1]))


def proportion_detach_policy(p, mode):
    """Proportions as used by the mixing: constants to L_gen in every mode."""
    _check_mode(mode)
    return ops.stop_gradient(p)


def copy_vanilla_weights(mixed_model, vanilla_model):
    """Initialise every domain copy of a mixed model from a vanilla model.

    Parameters are matched by name; a mixed weight of shape (k, ...) receives
    the vanilla (...) tensor in every slot. Proportion layers and heads that
    have no vanilla counterpart keep their values.
    """
    vanilla = vanilla_model.named_parameters()
    copied = 0
    for name, tensor in mixed_model.named_parameters().items():
        source = vanilla.get(name)
        if source is None:
            continue
        if source.shape == tensor.shape:
            tensor.data[...] = source.data
        elif tensor.shape[1:] == source.shape:
            tensor.data[...] = source.data[None, ...]
        else:
            raise ShapeError(f"copy_vanilla_weights[{name}]", source.shape, tensor.shape)
        copied += 1
    logger.info(f"Copied {copied} vanilla tensors into the mixed model")
    return copied
