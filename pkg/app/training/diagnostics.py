"""Whole-model gradient check and the detached-mode gradient contract."""
import logging
from dataclasses import dataclass, replace

import numpy as np

from app.corpus.text import PAD, RESERVED_TOKENS
from app.models import Batch
from app.tensor import backward, default_precision, grad_scaling
from app.tensor.gradcheck import check_gradients
from app.training.model import build_model, compute_loss


logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)

TINY_VOCAB = 10
TINY_LEN = 5


@dataclass
class ContractCheck:
    applicable: bool
    gen_router_grad: float = 0.0
    mix_transformer_grad: float = 0.0

    @property
    def passed(self):
        return not self.applicable or (self.gen_router_grad == 0.0 and self.mix_transformer_grad == 0.0)

    def to_dict(self) -> dict:
        return {
            "applicable": self.applicable,
            "passed": self.passed,
            "max_abs_dLgen_dR": self.gen_router_grad,
            "max_abs_dLmix_dtheta": self.mix_transformer_grad,
        }


def tiny_run_config(run_config, max_d=8):
    """Shrink a run config until finite differences over every parameter are cheap."""
    model = run_config.model
    d = min(model.d, max_d)
    heads = model.heads if d % model.heads == 0 and model.heads <= d else (2 if d % 2 == 0 else 1)
    model = replace(
        model,
        d=d,
        heads=heads,
        d_ff=min(model.d_ff, 2 * d),
        enc_layers=min(model.enc_layers, 2),
        dec_layers=min(model.dec_layers, 2),
        vocab_size=TINY_VOCAB,
        max_len=TINY_LEN + 2,
        dropout=0.0,
    )
    return replace(run_config, model=model, precision="f64").validate()


def random_batch(rng, vocab_size, k, batch_size=2, max_src=TINY_LEN, max_tgt=TINY_LEN):
    """Padded batch of random non-reserved ids with ragged lengths."""
    src_lengths = rng.integers(1, max_src + 1, size=batch_size)
    tgt_lengths = rng.integers(1, max_tgt + 1, size=batch_size)
    src = np.full((batch_size, int(src_lengths.max())), PAD, dtype=np.int64)
    tgt = np.full((batch_size, int(tgt_lengths.max()) + 2), PAD, dtype=np.int64)
    first = len(RESERVED_TOKENS)
    for row in range(batch_size):
        src[row, :src_lengths[row]] = rng.integers(first, vocab_size, size=src_lengths[row])
        body = rng.integers(first, vocab_size, size=tgt_lengths[row])
        tgt[row, :tgt_lengths[row] + 2] = np.concatenate([[1], body, [2]])
    return Batch(src=src, tgt=tgt, src_mask=src != PAD, tgt_mask=tgt != PAD,
                 domains=rng.integers(0, k, size=batch_size))


def _max_abs_grad(parameters):
    return max((float(np.abs(t.grad).max(initial=0.0)) for t in parameters.values()), default=0.0)


def detach_contract(model, batch, train_config):
    """∂L_gen/∂R and ∂L_mix/∂θ_transformer, which detached mode keeps at 0."""
    if train_config.detach_mode != "detached" or not model.is_mixed:
        return ContractCheck(applicable=False)
    routers = model.router_parameters()
    transformer = model.transformer_parameters()

    model.zero_grad()
    loss, _, _ = compute_loss(model, batch, train_config, parts=["gen"])
    backward(loss)
    gen_router_grad = _max_abs_grad(routers)

    model.zero_grad()
    loss, _, _ = compute_loss(model, batch, train_config, parts=["mix"])
    backward(loss)
    mix_transformer_grad = _max_abs_grad(transformer)
    model.zero_grad()
    return ContractCheck(True, gen_router_grad, mix_transformer_grad)


def run_gradcheck(run_config, seed=1, batch_size=2, step=1e-5, tolerance=1e-5, max_d=8):
    """Finite-difference check of L_total over every parameter of a tiny
    64-bit model, plus the detach contract when it applies."""
    run_config = tiny_run_config(run_config, max_d=max_d)
    train_config = run_config.train
    with default_precision("f64"):
        model = build_model(run_config, seed=seed)
        model.train()
        rng = np.random.default_rng(seed)
        batch = random_batch(rng, run_config.model.vocab_size, run_config.mixing.k, batch_size=batch_size)

        contract = detach_contract(model, batch, train_config)

        def loss_fn():
            loss, _, _ = compute_loss(model, batch, train_config)
            return loss

        # reversal multipliers are not derivatives; compare the unscaled gradient
        with grad_scaling(False):
            report = check_gradients(loss_fn, model.named_parameters(), step=step, tolerance=tolerance)
    logger.info(
        f"Gradient check over {len(report.checks)} tensors: max relative error {report.max_rel_error:.3e}, "
        f"contract {'ok' if contract.passed else 'violated'}"
    )
    return report, contract
