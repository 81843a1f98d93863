from dataclasses import replace

import numpy as np
import pytest

from app import create_app
from app.corpus.synthetic import generate_synthetic
from app.corpus.text import PAD, build_vocab
from app.models import Batch, MixingConfig, ModelConfig, RunConfig, SyntheticTaskSpec, TrainConfig
from app.tensor import set_default_dtype
from config import Config


class TestConfig(Config):
    TESTING = True
    PRECISION = "f64"
    DEFAULT_BEAM = 3


@pytest.fixture(autouse=True)
def float64():
    set_default_dtype("f64")
    yield
    set_default_dtype("f64")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_model_config():
    return ModelConfig(d=8, heads=2, enc_layers=1, dec_layers=1, d_ff=16, vocab_size=10, max_len=8, dropout=0.0)


@pytest.fixture
def tiny_run_config(tiny_model_config):
    return RunConfig(
        model=tiny_model_config,
        mixing=MixingConfig(scope="enc_dec", k=2, epsilon=0.05),
        train=TrainConfig(warmup_steps=10, lr_peak=1e-2, batch_size=4, max_steps=4, log_elapsed=False, label_smoothing=0.1),
        precision="f64",
    ).validate()


@pytest.fixture
def app():
    app = create_app(TestConfig)
    yield app


@pytest.fixture
def runner(app):
    return app.test_cli_runner()


def _make_batch(src_rows, tgt_rows, domains=None):
    width_s = max(len(r) for r in src_rows)
    width_t = max(len(r) for r in tgt_rows)
    src = np.full((len(src_rows), width_s), PAD, dtype=np.int64)
    tgt = np.full((len(tgt_rows), width_t), PAD, dtype=np.int64)
    for i, row in enumerate(src_rows):
        src[i, :len(row)] = row
    for i, row in enumerate(tgt_rows):
        tgt[i, :len(row)] = row
    domains = np.zeros(len(src_rows), dtype=np.int64) if domains is None else np.asarray(domains)
    return Batch(src=src, tgt=tgt, src_mask=src != PAD, tgt_mask=tgt != PAD, domains=domains)


@pytest.fixture
def make_batch():
    return _make_batch


@pytest.fixture
def synthetic_spec():
    return SyntheticTaskSpec(
        k=2, shared_words=4, exclusive_words=3, ambiguous_words=2, min_len=2, max_len=4,
        train_sentences=16, valid_sentences=4, test_sentences=4, seed=2,
    )


@pytest.fixture
def synthetic_task(tiny_run_config, synthetic_spec):
    """Tiny run config sized to the vocabulary of a small synthetic corpus."""
    splits = generate_synthetic(synthetic_spec)
    vocab = build_vocab(splits["train"] + splits["valid"] + splits["test"])
    run_config = replace(tiny_run_config, model=replace(tiny_run_config.model, vocab_size=vocab.size))
    return run_config, vocab, splits
