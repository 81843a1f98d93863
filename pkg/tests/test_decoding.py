from itertools import product

import numpy as np
import pytest

from app.corpus.text import BOS, EOS, PAD, UNK
from app.models import Hypothesis, MixingConfig, ModelConfig
from app.nn.transformer import Transformer
from app.evaluation.decoding import beam_search, greedy_decode, translate_ids
from app.tensor import no_grad, ops


@pytest.fixture
def model():
    config = ModelConfig(d=8, heads=2, enc_layers=1, dec_layers=1, d_ff=16, vocab_size=6, max_len=6, dropout=0.0)
    return Transformer(config, MixingConfig(scope="enc_dec", k=2), seed=11).eval()


SOURCES = [[4], [5, 4], [4, 4, 5], [3, 5, 5, 4]]


def test_beam_of_one_is_greedy():
    rng = np.random.default_rng(21)
    for seed in range(200):
        config = ModelConfig(d=8, heads=2, enc_layers=1, dec_layers=1, d_ff=16, vocab_size=6, max_len=6,
                             dropout=0.0, layer_norm=("pre", "post")[seed % 2])
        scope = ("none", "encoder", "enc_dec")[seed % 3]
        model = Transformer(config, MixingConfig(scope=scope, k=2), seed=seed)
        source = [int(i) for i in rng.integers(UNK, 6, size=int(rng.integers(1, 5)))]
        assert translate_ids(model, [source], beam=1) == greedy_decode(model, [source])


@pytest.mark.parametrize("decode", [
    lambda model: greedy_decode(model, SOURCES),
    lambda model: beam_search(model, SOURCES[0], beam=2),
])
def test_decoding_restores_training_mode(model, decode):
    model.train()
    decode(model)
    assert all(module.training for module in model.modules())
    model.eval()
    decode(model)
    assert not any(module.training for module in model.modules())


def test_batched_greedy_matches_single_sentence(model):
    batched = greedy_decode(model, SOURCES)
    assert batched == [greedy_decode(model, [source])[0] for source in SOURCES]


def test_greedy_never_emits_pad_or_bos(model):
    for output in greedy_decode(model, SOURCES, max_len=4):
        assert len(output) <= 4
        assert PAD not in output and BOS not in output
        assert EOS not in output[:-1]


def sequence_log_prob(model, source, tokens):
    src = np.array([source])
    prefix = np.array([[BOS] + tokens[:-1]])
    with no_grad():
        state = model.encode(src, src != PAD)
        logits = model.decode(prefix, np.ones(prefix.shape, dtype=bool), state).logits
        log_probs = ops.log_softmax(logits, axis=-1).data[0]
    return float(sum(log_probs[t, token] for t, token in enumerate(tokens)))


@pytest.mark.parametrize("alpha", [0.0, 1.0])
def test_wide_beam_finds_exhaustive_best(model, alpha):
    max_len = 4
    emitted = [UNK, 4, 5]
    source = [4, 5]
    candidates = []
    for length in range(max_len):
        for body in product(emitted, repeat=length):
            tokens = list(body) + [EOS]
            candidates.append(Hypothesis(tokens=tokens, log_prob=sequence_log_prob(model, source, tokens), finished=True))
    best = min(candidates, key=lambda h: (-h.score(alpha), h.tokens))

    found = beam_search(model, source, beam=6 ** max_len, max_len=max_len, length_penalty=alpha)
    assert found.tokens == best.tokens
    assert found.log_prob == pytest.approx(best.log_prob, abs=1e-9)


def test_length_penalty_can_reorder_hypotheses():
    short = Hypothesis(tokens=[EOS], log_prob=-1.0, finished=True)
    long = Hypothesis(tokens=[4, 5, 4, EOS], log_prob=-2.0, finished=True)
    assert short.score(0.0) > long.score(0.0)
    assert long.score(1.0) > short.score(1.0)


def test_empty_sources(model):
    assert translate_ids(model, []) == []
    assert translate_ids(model, [[], [4]], greedy=True)[0] == []
    assert greedy_decode(model, []) == []


def test_beam_must_be_positive(model):
    with pytest.raises(ValueError):
        beam_search(model, [4], beam=0)
