"""Deterministic multi-domain corpus with words whose translation depends
on the domain of the sentence they occur in."""
import logging
from dataclasses import dataclass, field

import numpy as np

from app.errors import CorpusError
from app.models import BitextExample


logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)

SPLITS = ("train", "valid", "test")
MAX_ATTEMPTS_PER_SENTENCE = 200


@dataclass
class SyntheticLexicon:
    k: int
    shared: list = field(default_factory=list)
    exclusive: list = field(default_factory=list)
    ambiguous: list = field(default_factory=list)

    @classmethod
    def from_spec(cls, spec):
        return cls(
            k=spec.k,
            shared=[f"sh{i}" for i in range(spec.shared_words)],
            exclusive=[[f"ex{j}_{i}" for i in range(spec.exclusive_words)] for j in range(spec.k)],
            ambiguous=[f"am{i}" for i in range(spec.ambiguous_words)],
        )

    @property
    def total_words(self):
        return len(self.shared) + sum(len(words) for words in self.exclusive) + len(self.ambiguous)

    def translate(self, word, domain):
        if word.startswith("am"):
            return f"t{word}_{domain}"
        return f"t{word}"

    def kind(self, word):
        if word.startswith("am"):
            return "ambiguous"
        if word.startswith("ex"):
            return "exclusive"
        return "shared"

    def owner(self, word):
        """Domain owning an exclusive word, None otherwise."""
        if not word.startswith("ex"):
            return None
        return int(word[2:].split("_")[0])


def _sample_sentence(rng, lexicon, spec, domain):
    length = int(rng.integers(spec.min_len, spec.max_len + 1))
    markers = lexicon.exclusive[domain]
    unmarked_pool = lexicon.shared + lexicon.ambiguous
    with_marker = bool(markers) and rng.random() < spec.p_marker
    if with_marker or not unmarked_pool:
        pool = unmarked_pool + markers
        words = [pool[i] for i in rng.integers(0, len(pool), size=length)]
        if not any(lexicon.owner(word) == domain for word in words):
            words[int(rng.integers(0, length))] = markers[int(rng.integers(0, len(markers)))]
        return words
    return [unmarked_pool[i] for i in rng.integers(0, len(unmarked_pool), size=length)]


def generate_synthetic(spec):
    """Train/valid/test example lists, reproducible from `spec.seed`.

    Sources are unique across splits (per domain); targets are the word-wise
    translation under the sentence's domain.
    """
    spec.validate()
    lexicon = SyntheticLexicon.from_spec(spec)
    if lexicon.total_words == 0:
        raise CorpusError("Synthetic task has no words")
    if spec.p_marker > 0 and spec.exclusive_words == 0:
        logger.warning("p_marker > 0 but no domain-exclusive words exist; sentences will carry no marker")

    rng = np.random.default_rng(spec.seed)
    seen = set()
    splits = {}
    for split, count in zip(SPLITS, (spec.train_sentences, spec.valid_sentences, spec.test_sentences)):
        examples = []
        for i in range(count):
            domain = i % spec.k
            for _ in range(MAX_ATTEMPTS_PER_SENTENCE):
                words = _sample_sentence(rng, lexicon, spec, domain)
                key = (domain, tuple(words))
                if key not in seen:
                    break
            else:
                raise CorpusError(
                    f"Could not draw {count} distinct {split} sentences; enlarge the lexicon or the length range"
                )
            seen.add(key)
            examples.append(BitextExample(
                src=list(words),
                tgt=[lexicon.translate(word, domain) for word in words],
                domain=domain,
            ))
        splits[split] = examples
        logger.info(f"Generated {len(examples)} {split} sentences over {spec.k} domains")
    return splits


def domain_counts(examples, k):
    counts = [0] * k
    for example in examples:
        counts[example.domain] += 1
    return counts
