"""Greedy and beam-search decoding. PAD and BOS are never emitted and
argmax ties go to the lowest token id."""
import numpy as np

from app.corpus.text import BOS, EOS, PAD
from app.models import Hypothesis
from app.nn.transformer import EncoderState
from app.tensor import Tensor, no_grad, ops


BLOCKED_TOKENS = (PAD, BOS)


def _transformer(model):
    return getattr(model, "transformer", model)


def _default_max_len(transformer):
    return transformer.config.max_len - 1


def _pad_sources(sources):
    width = max(len(src) for src in sources)
    src = np.full((len(sources), width), PAD, dtype=np.int64)
    for row, ids in enumerate(sources):
        src[row, :len(ids)] = ids
    return src, src != PAD


def _next_log_probs(transformer, state, prefixes):
    """log p(· | prefix, x) for the last position of every prefix row."""
    tgt_in = np.asarray(prefixes, dtype=np.int64)
    output = transformer.decode(tgt_in, np.ones(tgt_in.shape, dtype=bool), state)
    log_probs = ops.log_softmax(output.logits, axis=-1).data[:, -1, :].astype(np.float64)
    log_probs[:, list(BLOCKED_TOKENS)] = -np.inf
    return log_probs


def _repeat_state(state, rows):
    return EncoderState(hidden=Tensor(np.repeat(state.hidden.data, rows, axis=0)), mask=np.repeat(state.mask, rows, axis=0))


def greedy_decode(model, sources, max_len=None):
    """Argmax decoding of a batch of source id lists; returns one id list per
    source, ending in EOS unless the step budget ran out."""
    transformer = _transformer(model)
    max_len = _default_max_len(transformer) if max_len is None else max_len
    if not sources:
        return []
    src, src_mask = _pad_sources(sources)
    outputs = [[] for _ in sources]
    finished = np.zeros(len(sources), dtype=bool)
    with transformer.evaluating(), no_grad():
        state = transformer.encode(src, src_mask)
        prefixes = np.full((len(sources), 1), BOS, dtype=np.int64)
        for _ in range(max_len):
            tokens = np.argmax(_next_log_probs(transformer, state, prefixes), axis=-1)
            for row, token in enumerate(tokens):
                if not finished[row]:
                    outputs[row].append(int(token))
                    finished[row] = token == EOS
            if finished.all():
                break
            prefixes = np.concatenate([prefixes, np.where(finished, PAD, tokens)[:, None]], axis=1)
    return outputs


def _rank_key(hypothesis, alpha):
    return (-hypothesis.score(alpha), hypothesis.tokens)


def beam_search(model, source, beam=5, max_len=None, length_penalty=1.0):
    """Best hypothesis for one source under summed log-probabilities.

    Each step expands every live hypothesis by every token and keeps the
    `beam` best by log-probability (ties by token sequence). Finished
    hypotheses are ranked by log_prob / len^length_penalty; if none
    finished, the best live one is returned.
    """
    if beam < 1:
        raise ValueError("beam must be >= 1")
    transformer = _transformer(model)
    max_len = _default_max_len(transformer) if max_len is None else max_len
    src, src_mask = _pad_sources([source])
    alive = [Hypothesis(tokens=[])]
    finished = []
    with transformer.evaluating(), no_grad():
        state = transformer.encode(src, src_mask)
        for _ in range(max_len):
            prefixes = np.array([[BOS] + hyp.tokens for hyp in alive], dtype=np.int64)
            log_probs = _next_log_probs(transformer, _repeat_state(state, len(alive)), prefixes)
            candidates = []
            for hyp, row in zip(alive, log_probs):
                for token in np.flatnonzero(np.isfinite(row)):
                    candidates.append(Hypothesis(
                        tokens=hyp.tokens + [int(token)],
                        log_prob=hyp.log_prob + float(row[token]),
                        finished=token == EOS,
                    ))
            candidates.sort(key=lambda h: (-h.log_prob, h.tokens))
            alive = []
            for candidate in candidates[:beam]:
                (finished if candidate.finished else alive).append(candidate)
            if not alive:
                break
    pool = finished or alive
    return min(pool, key=lambda h: _rank_key(h, length_penalty))


def translate_ids(model, sources, beam=5, max_len=None, length_penalty=1.0, greedy=False):
    """Decode every source; empty sources yield empty outputs."""
    results = [[] for _ in sources]
    for i, src in enumerate(sources):
        if not len(src):
            continue
        if greedy:
            results[i] = greedy_decode(model, [src], max_len)[0]
        else:
            results[i] = beam_search(model, src, beam, max_len, length_penalty).tokens
    return results
