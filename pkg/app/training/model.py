"""The trainable bundle: transformer plus the optional baseline and WL heads,
and the composite loss over one batch."""
import numpy as np

from app.mixing.context import MixingContext
from app.models import LossBreakdown
from app.nn.module import Module
from app.nn.transformer import Transformer
from app.tensor import ops
from app.training.heads import DomainClassifierHead, WordWeightHead, baseline_head_loss
from app.training.losses import label_smoothed_ce, mix_loss, wl_weighted_gen_loss


ROUTER_SUFFIX = ".router.R"


class DomainMixingModel(Module):
    def __init__(self, run_config, seed=None):
        super().__init__()
        seed = run_config.train.seed if seed is None else seed
        self.run_config = run_config
        self.transformer = Transformer(run_config.model, run_config.mixing, seed=seed)
        head_rng = np.random.default_rng([seed, 1])
        d, k = run_config.model.d, run_config.mixing.k
        self.domain_head = None
        self.wl_head = None
        if run_config.train.baseline != "none":
            self.domain_head = DomainClassifierHead(d, k, run_config.train.baseline, head_rng)
        if run_config.train.wl_enabled:
            self.wl_head = WordWeightHead(d, k, head_rng)

    @property
    def is_mixed(self):
        return self.transformer.is_mixed

    def router_parameters(self):
        return {name: t for name, t in self.named_parameters().items() if name.endswith(ROUTER_SUFFIX)}

    def transformer_parameters(self):
        """Every transformer parameter that is not a proportion-layer matrix."""
        return {
            name: t for name, t in self.transformer.named_parameters(prefix="transformer.").items()
            if not name.endswith(ROUTER_SUFFIX)
        }


def build_model(run_config, seed=None):
    return DomainMixingModel(run_config, seed=seed)


def compute_loss(model, batch, train_config, rng=None, parts=None):
    """Forward one batch and return (L_total, LossBreakdown, MixingContext).

    `parts` restricts the returned loss to a subset of {"gen", "mix", "aux"};
    the breakdown always reports every component.
    """
    k = model.run_config.mixing.k
    context = MixingContext(train_config.detach_mode)
    transformer = model.transformer
    state = transformer.encode(batch.src, batch.src_mask, context, rng)
    output = transformer.decode(batch.decoder_input, batch.tgt_mask[:, :-1], state, context, rng)
    targets, mask = batch.decoder_target, batch.decoder_target_mask

    aux_terms = []
    beta_mean = None
    if model.wl_head is not None:
        wl_loss, beta = model.wl_head.loss_and_beta(output.hidden, batch.domains, mask)
        gen = wl_weighted_gen_loss(output.logits, targets, mask, beta, train_config.label_smoothing)
        aux_terms.append(wl_loss)
        beta_mean = float(beta[mask].mean())
    else:
        gen = label_smoothed_ce(output.logits, targets, mask, train_config.label_smoothing)

    if model.domain_head is not None:
        aux_terms.append(baseline_head_loss(model.domain_head, state, batch.domains))

    mix, per_domain = mix_loss(context.records, batch.domains, k, train_config.mix_loss_reduction)
    aux = None
    for term in aux_terms:
        aux = term if aux is None else ops.add(aux, term)

    selected = {"gen", "mix", "aux"} if parts is None else set(parts)
    total = None
    if "gen" in selected:
        total = gen
    if "mix" in selected and train_config.use_mix_loss and context.records:
        total = mix if total is None else ops.add(total, mix)
    if "aux" in selected and aux is not None:
        total = aux if total is None else ops.add(total, aux)
    if total is None:
        total = ops.as_tensor(0.0)

    L_gen = float(gen.data)
    L_mix = float(mix.data)
    L_aux = float(aux.data) if aux is not None else 0.0
    breakdown = LossBreakdown(
        L_gen=L_gen,
        L_mix=L_mix,
        L_aux=L_aux,
        L_total=L_gen + (L_mix if train_config.use_mix_loss else 0.0) + L_aux,
        L_mix_per_domain=per_domain,
        beta_mean=beta_mean,
    )
    return total, breakdown, context


def restore_model(checkpoint):
    """Rebuild the model from the config snapshot stored in a checkpoint."""
    model = build_model(checkpoint.config)
    model.load_state_dict(checkpoint.parameters)
    return model
