from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from app.errors import ConfigError


LAYER_NORM_POSITIONS = ("pre", "post")
MIXING_SCOPES = ("none", "encoder", "enc_dec")
DETACH_MODES = ("detached", "mtl", "advl", "padvl")
BASELINES = ("none", "mtl", "advl", "padvl")
MIX_LOSS_REDUCTIONS = ("mean", "sum")


def _require(condition, key, message):
    if not condition:
        raise ConfigError(key, message)


class RecordMixin:
    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ModelConfig(RecordMixin):
    d: int = 48
    heads: int = 4
    enc_layers: int = 2
    dec_layers: int = 2
    d_ff: int = 96
    vocab_size: int = 4
    max_len: int = 24
    layer_norm: str = "pre"
    dropout: float = 0.1
    positional: bool = True

    def validate(self):
        for key in ("d", "heads", "enc_layers", "dec_layers", "d_ff", "vocab_size", "max_len"):
            _require(getattr(self, key) >= 1, f"model.{key}", "must be >= 1")
        _require(self.d % self.heads == 0, "model.heads", f"d={self.d} is not divisible by heads={self.heads}")
        _require(self.layer_norm in LAYER_NORM_POSITIONS, "model.layer_norm", f"expected one of {LAYER_NORM_POSITIONS}")
        _require(0.0 <= self.dropout < 1.0, "model.dropout", "must be in [0, 1)")
        return self


@dataclass
class MixingConfig(RecordMixin):
    scope: str = "enc_dec"
    k: int = 2
    epsilon: float = 0.05

    def validate(self):
        _require(self.scope in MIXING_SCOPES, "mixing.scope", f"expected one of {MIXING_SCOPES}")
        _require(self.k >= 1, "mixing.k", "must be >= 1")
        _require(0.0 < self.epsilon < 1.0, "mixing.epsilon", "must be in (0, 1)")
        return self

    @property
    def encoder_mixed(self):
        return self.scope in ("encoder", "enc_dec")

    @property
    def decoder_mixed(self):
        return self.scope == "enc_dec"


@dataclass
class TrainConfig(RecordMixin):
    lr_peak: float = 5e-4
    warmup_steps: int = 4000
    warmup_init_lr: float = 1e-7
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-8
    weight_decay: float = 1e-4
    router_weight_decay: float = 0.0
    label_smoothing: float = 0.1
    max_steps: int = 1000
    batch_size: int = 32
    seed: int = 1
    use_mix_loss: bool = True
    wl_enabled: bool = False
    baseline: str = "none"
    detach_mode: str = "detached"
    mix_loss_reduction: str = "mean"
    save_every: int = 0
    eval_every: int = 0
    log_every: int = 50
    log_elapsed: bool = True

    def validate(self):
        _require(self.lr_peak > 0, "train.lr_peak", "must be > 0")
        _require(self.warmup_steps >= 1, "train.warmup_steps", "must be >= 1")
        _require(self.warmup_init_lr >= 0, "train.warmup_init_lr", "must be >= 0")
        _require(0.0 <= self.label_smoothing < 1.0, "train.label_smoothing", "must be in [0, 1)")
        _require(0.0 <= self.beta1 < 1.0, "train.beta1", "must be in [0, 1)")
        _require(0.0 <= self.beta2 < 1.0, "train.beta2", "must be in [0, 1)")
        _require(self.weight_decay >= 0, "train.weight_decay", "must be >= 0")
        _require(self.router_weight_decay >= 0, "train.router_weight_decay", "must be >= 0")
        _require(self.max_steps >= 0, "train.max_steps", "must be >= 0")
        _require(self.batch_size >= 1, "train.batch_size", "must be >= 1")
        _require(self.baseline in BASELINES, "train.baseline", f"expected one of {BASELINES}")
        _require(self.detach_mode in DETACH_MODES, "train.detach_mode", f"expected one of {DETACH_MODES}")
        _require(
            self.mix_loss_reduction in MIX_LOSS_REDUCTIONS,
            "train.mix_loss_reduction",
            f"expected one of {MIX_LOSS_REDUCTIONS}",
        )
        return self


@dataclass
class PathsConfig(RecordMixin):
    train: Optional[str] = None
    valid: Optional[str] = None
    test: Optional[str] = None
    vocab: Optional[str] = None
    checkpoint: Optional[str] = None
    output_dir: Optional[str] = None


@dataclass
class RunConfig(RecordMixin):
    model: ModelConfig = field(default_factory=ModelConfig)
    mixing: MixingConfig = field(default_factory=MixingConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    paths: PathsConfig = field(default_factory=PathsConfig)
    precision: str = "f32"

    def validate(self):
        self.model.validate()
        self.mixing.validate()
        self.train.validate()
        _require(self.precision in ("f32", "f64"), "precision", "expected f32 or f64")
        return self

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return cls(
            model=ModelConfig(**data.get("model", {})),
            mixing=MixingConfig(**data.get("mixing", {})),
            train=TrainConfig(**data.get("train", {})),
            paths=PathsConfig(**data.get("paths", {})),
            precision=data.get("precision", "f32"),
        )


@dataclass
class SyntheticTaskSpec(RecordMixin):
    k: int = 2
    shared_words: int = 40
    exclusive_words: int = 40
    ambiguous_words: int = 8
    p_marker: float = 1.0
    min_len: int = 3
    max_len: int = 10
    train_sentences: int = 2000
    valid_sentences: int = 200
    test_sentences: int = 200
    seed: int = 7

    def validate(self):
        _require(self.k >= 1, "synthetic.k", "must be >= 1")
        for key in ("shared_words", "exclusive_words", "ambiguous_words",
                    "train_sentences", "valid_sentences", "test_sentences"):
            _require(getattr(self, key) >= 0, f"synthetic.{key}", "must be >= 0")
        _require(0.0 <= self.p_marker <= 1.0, "synthetic.p_marker", "must be in [0, 1]")
        _require(1 <= self.min_len <= self.max_len, "synthetic.min_len", "need 1 <= min_len <= max_len")
        return self


@dataclass
class BitextExample(RecordMixin):
    src: list
    tgt: list
    domain: int


@dataclass
class Batch:
    src: np.ndarray
    tgt: np.ndarray
    src_mask: np.ndarray
    tgt_mask: np.ndarray
    domains: np.ndarray

    @property
    def size(self):
        return self.src.shape[0]

    @property
    def decoder_input(self):
        return self.tgt[:, :-1]

    @property
    def decoder_target(self):
        return self.tgt[:, 1:]

    @property
    def decoder_target_mask(self):
        return self.tgt_mask[:, 1:]


@dataclass
class LossBreakdown(RecordMixin):
    L_gen: float
    L_mix: float
    L_aux: float
    L_total: float
    L_mix_per_domain: list = field(default_factory=list)
    beta_mean: Optional[float] = None


@dataclass
class Hypothesis:
    tokens: list
    log_prob: float = 0.0
    finished: bool = False

    def score(self, alpha):
        length = max(len(self.tokens), 1)
        return self.log_prob / (length ** alpha)


@dataclass
class ProportionRecord(RecordMixin):
    stack: str
    layer: int
    sublayer: str
    proportions: list

    @property
    def tag(self):
        return f"{self.stack}_{self.sublayer}"


@dataclass
class ProportionTrace:
    sentence_id: int
    tokens: list
    target_tokens: Optional[list] = None
    records: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "id": self.sentence_id,
            "tokens": self.tokens,
            **({"target_tokens": self.target_tokens} if self.target_tokens is not None else {}),
            "records": [
                {"layer": record.layer, "sublayer": record.tag, "proportions": record.proportions}
                for record in self.records
            ],
        }
