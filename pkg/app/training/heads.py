"""Domain-aware embedding baselines and the word-level weighting head."""
import numpy as np

from app.errors import ConfigError
from app.mixing.mixed import gradient_multiplier
from app.nn.layers import Linear
from app.nn.module import Module
from app.tensor import ops
from app.training.losses import domain_ce


def masked_mean(hidden, mask):
    """Mean of (B, L, d) hidden states over the non-pad positions of each row."""
    mask = np.asarray(mask, dtype=bool)
    weights = mask / mask.sum(axis=1, keepdims=True)
    weights = np.broadcast_to(weights[..., None], hidden.shape).astype(hidden.dtype)
    return ops.sum(ops.mul(hidden, ops.as_tensor(weights)), axis=1)


class DomainClassifierHead(Module):
    """Sentence-level domain classifier on mean-pooled encoder outputs.

    mtl trains the encoder to expose the domain, advl reverses the gradient
    entering the encoder output, padvl reverses it on the second half of
    the features only.
    """

    def __init__(self, d, k, mode, rng):
        super().__init__()
        if mode not in ("mtl", "advl", "padvl"):
            raise ConfigError("train.baseline", f"no classifier head for mode '{mode}'")
        self.mode = mode
        self.classifier = Linear(d, k, rng)

    def __call__(self, encoder_state):
        hidden = encoder_state.hidden
        if self.mode != "mtl":
            hidden = ops.scale_grad(hidden, gradient_multiplier(self.mode, hidden.shape[-1]))
        return self.classifier(masked_mean(hidden, encoder_state.mask))


def baseline_head_loss(head, encoder_state, domains):
    return domain_ce(head(encoder_state), domains)


class WordWeightHead(Module):
    """Per-target-position domain classifier on the last decoder hidden
    layer; β_j is its probability of the sentence's true domain."""

    def __init__(self, d, k, rng):
        super().__init__()
        self.classifier = Linear(d, k, rng)

    def __call__(self, decoder_hidden):
        return ops.softmax(self.classifier(ops.stop_gradient(decoder_hidden)), axis=-1)

    def loss_and_beta(self, decoder_hidden, domains, mask):
        probs = self(decoder_hidden)
        mask = np.asarray(mask, dtype=bool)
        k = probs.shape[-1]
        selector = np.eye(k)[np.asarray(domains, dtype=np.int64)][:, None, :] * mask[..., None]
        selector = selector / mask.sum()
        loss = ops.scale(ops.sum(ops.mul(ops.log(probs), ops.as_tensor(selector.astype(probs.dtype)))), -1.0)
        beta = (ops.stop_gradient(probs).data * (selector > 0)).sum(axis=-1)
        return loss, beta
