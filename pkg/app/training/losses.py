import numpy as np

from app.errors import DomixError
from app.tensor import ops


def _target_distribution(targets, vocab_size, smoothing, dtype):
    """(1 - s) on the target plus s/V spread over every class."""
    dist = np.full(targets.shape + (vocab_size,), smoothing / vocab_size, dtype=dtype)
    np.put_along_axis(dist, targets[..., None], 1.0 - smoothing + smoothing / vocab_size, axis=-1)
    return dist


def weighted_ce(logits, targets, position_weights, smoothing=0.0):
    """-Σ_t w_t Σ_v q_t(v) log p_t(v) for explicit per-position weights."""
    targets = np.asarray(targets, dtype=np.int64)
    vocab_size = logits.shape[-1]
    if targets.size and targets.max() >= vocab_size:
        raise DomixError(f"Target id {targets.max()} out of range for vocabulary of {vocab_size}")
    log_probs = ops.log_softmax(logits, axis=-1)
    dist = _target_distribution(targets, vocab_size, smoothing, log_probs.dtype)
    weights = dist * np.asarray(position_weights, dtype=log_probs.dtype)[..., None]
    return ops.scale(ops.sum(ops.mul(log_probs, ops.as_tensor(weights))), -1.0)


def _token_count(mask):
    count = int(np.asarray(mask, dtype=bool).sum())
    if count == 0:
        raise DomixError("Every target position is padding")
    return count


def label_smoothed_ce(logits, targets, mask, smoothing=0.0):
    """Mean over non-pad positions of cross entropy against the smoothed
    target distribution."""
    mask = np.asarray(mask, dtype=bool)
    return weighted_ce(logits, targets, mask / _token_count(mask), smoothing)


def wl_weighted_gen_loss(logits, targets, mask, beta, smoothing=0.0):
    """-(1/n) Σ_j (1 + β_j) log p(y_j | x, y_<j), pad-masked; β is a constant."""
    mask = np.asarray(mask, dtype=bool)
    beta = np.asarray(beta, dtype=np.float64)
    if ((beta < 0) | (beta > 1))[mask].any():
        raise DomixError("WL weights must lie in [0, 1]")
    return weighted_ce(logits, targets, mask * (1.0 + beta) / _token_count(mask), smoothing)


def token_nll(logits, targets, mask):
    """Summed natural-log NLL over non-pad positions and the token count."""
    mask = np.asarray(mask, dtype=bool)
    total = weighted_ce(logits, targets, mask.astype(np.float64), 0.0)
    return float(total.data), int(mask.sum())


def mix_loss(records, domains, k, reduction="mean"):
    """Σ over (token, sublayer, layer) records of -log p_J, averaged over the
    record count by default. Returns the loss and per-domain means."""
    domains = np.asarray(domains, dtype=np.int64)
    if domains.size and (domains.min() < 0 or domains.max() >= k):
        raise DomixError(f"Domain label {domains.max()} out of range for k={k}")
    if not records:
        return ops.as_tensor(0.0), [0.0] * k
    one_hot = np.eye(k)[domains]
    total = None
    count = 0
    per_domain_sum = np.zeros(k)
    per_domain_count = np.zeros(k)
    for record in records:
        mask = record.token_mask
        selector = one_hot[:, None, :] * mask[..., None]
        term = ops.sum(ops.mul(ops.log(record.proportions), ops.as_tensor(selector.astype(record.proportions.dtype))))
        total = term if total is None else ops.add(total, term)
        count += int(mask.sum())
        nll = -np.log((record.proportions.data * one_hot[:, None, :]).sum(axis=-1))
        np.add.at(per_domain_sum, domains, (nll * mask).sum(axis=1))
        np.add.at(per_domain_count, domains, mask.sum(axis=1))
    loss = ops.scale(total, -1.0 / count if reduction == "mean" and count else -1.0)
    per_domain = [float(s / c) if c else 0.0 for s, c in zip(per_domain_sum, per_domain_count)]
    return loss, per_domain


def domain_ce(logits, domains):
    """Mean hard-label cross entropy of sentence-level domain logits (B, k)."""
    domains = np.asarray(domains, dtype=np.int64)
    log_probs = ops.log_softmax(logits, axis=-1)
    one_hot = np.eye(logits.shape[-1], dtype=log_probs.dtype)[domains]
    return ops.scale(ops.sum(ops.mul(log_probs, ops.as_tensor(one_hot))), -1.0 / len(domains))
