import logging

import numpy as np
from sacrebleu.metrics import BLEU

from app.corpus.text import encode_batch
from app.errors import DomixError
from app.tensor import no_grad
from app.training.losses import token_nll


logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)


def _as_line(sentence):
    return sentence if isinstance(sentence, str) else " ".join(sentence)


def corpus_bleu(hypotheses, references):
    """Corpus BLEU on whitespace tokens, n = 1..4, no smoothing, ×100."""
    if len(hypotheses) != len(references):
        raise DomixError(f"{len(hypotheses)} hypotheses for {len(references)} references")
    if not hypotheses:
        raise DomixError("BLEU of an empty corpus is undefined")
    metric = BLEU(tokenize="none", smooth_method="none", force=True)
    return float(metric.corpus_score([_as_line(h) for h in hypotheses], [[_as_line(r) for r in references]]).score)


def sentence_bleu(hypothesis, reference):
    """Diagnostic per-sentence BLEU with add-one smoothing on n >= 2."""
    metric = BLEU(tokenize="none", smooth_method="add-k", smooth_value=1, effective_order=True)
    return float(metric.sentence_score(_as_line(hypothesis), [_as_line(reference)]).score)


def corpus_nll(model, examples, vocab, max_len, batch_size=32):
    """Summed natural-log NLL of the references and their non-pad token count."""
    transformer = getattr(model, "transformer", model)
    total, count = 0.0, 0
    with transformer.evaluating(), no_grad():
        for start in range(0, len(examples), batch_size):
            batch = encode_batch(examples[start:start + batch_size], vocab, max_len, pad_to_max_len=False)
            output = transformer(batch)
            nll, tokens = token_nll(output.logits, batch.decoder_target, batch.decoder_target_mask)
            total += nll
            count += tokens
    return total, count


def perplexity(model, examples, vocab, max_len, batch_size=32):
    if not examples:
        raise DomixError("Perplexity of an empty corpus is undefined")
    total, count = corpus_nll(model, examples, vocab, max_len, batch_size)
    return float(np.exp(total / count))
