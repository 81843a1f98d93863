from dataclasses import replace

import numpy as np
import pytest

from app.corpus.text import encode_batch
from app.errors import DomixError
from app.evaluation.metrics import corpus_bleu, corpus_nll, perplexity, sentence_bleu
from app.nn.transformer import Transformer
from app.tensor import no_grad
from app.training.losses import token_nll


def test_bleu_hand_value():
    assert corpus_bleu(["a b c d e"], ["a b c d f"]) == pytest.approx(100 * 0.2 ** 0.25, abs=1e-2)
    assert corpus_bleu(["a b c d e"], ["a b c d f"]) == pytest.approx(66.87, abs=1e-2)


def test_bleu_identity_and_disjoint():
    text = ["the cat sat on the mat", "a b c d"]
    assert corpus_bleu(text, text) == pytest.approx(100.0)
    assert corpus_bleu(["w x y z"], ["a b c d"]) == 0.0


def test_bleu_accepts_token_lists():
    assert corpus_bleu([["a", "b", "c", "d", "e"]], [["a", "b", "c", "d", "f"]]) == pytest.approx(66.87, abs=1e-2)


def test_bleu_input_errors():
    with pytest.raises(DomixError):
        corpus_bleu(["a"], ["a", "b"])
    with pytest.raises(DomixError):
        corpus_bleu([], [])


def test_sentence_bleu():
    assert sentence_bleu("a b c d", "a b c d") == pytest.approx(100.0)
    assert 0.0 < sentence_bleu("a b x", "a b c d") < 100.0


def test_uniform_model_perplexity_is_vocab_size(synthetic_task):
    run_config, vocab, splits = synthetic_task
    model = Transformer(run_config.model, run_config.mixing, seed=0)
    model.output.weight.data[...] = 0.0
    model.output.bias.data[...] = 0.0
    ppl = perplexity(model, splits["valid"], vocab, run_config.model.max_len)
    assert ppl == pytest.approx(vocab.size, abs=1e-9)


def test_corpus_nll_matches_per_sentence_sum(synthetic_task):
    run_config, vocab, splits = synthetic_task
    model = Transformer(run_config.model, run_config.mixing, seed=0).eval()
    examples = splits["test"][:2]
    expected_total, expected_count = 0.0, 0
    with no_grad():
        for example in examples:
            batch = encode_batch([example], vocab, run_config.model.max_len, pad_to_max_len=False)
            nll, count = token_nll(model(batch).logits, batch.decoder_target, batch.decoder_target_mask)
            expected_total += nll
            expected_count += count
    total, count = corpus_nll(model, examples, vocab, run_config.model.max_len, batch_size=2)
    assert count == expected_count
    assert total == pytest.approx(expected_total, abs=1e-9)


def test_perplexity_of_empty_set_is_an_error(synthetic_task):
    run_config, vocab, _ = synthetic_task
    with pytest.raises(DomixError):
        perplexity(Transformer(run_config.model, run_config.mixing), [], vocab, run_config.model.max_len)


def test_scoring_restores_training_mode(synthetic_task):
    run_config, vocab, splits = synthetic_task
    model = Transformer(replace(run_config.model, dropout=0.1), run_config.mixing).train()
    corpus_nll(model, splits["valid"], vocab, run_config.model.max_len)
    assert model.training
    assert np.isfinite(perplexity(model, splits["valid"], vocab, run_config.model.max_len))
