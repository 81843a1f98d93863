import hashlib
import logging
from collections import Counter
from pathlib import Path

import numpy as np

from app.errors import CorpusError
from app.models import Batch, BitextExample


logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)


PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED_TOKENS = ("<pad>", "<s>", "</s>", "<unk>")


def tokenize(text):
    return text.lower().split()


def detokenize(tokens):
    return " ".join(tokens)


class Vocab:
    """Shared source/target token table. Ids 0-3 are reserved."""

    def __init__(self, tokens=()):
        self.itos = list(RESERVED_TOKENS)
        self.stoi = {token: i for i, token in enumerate(self.itos)}
        for token in tokens:
            if token in self.stoi:
                raise CorpusError(f"Duplicate vocabulary entry '{token}'")
            self.stoi[token] = len(self.itos)
            self.itos.append(token)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    @property
    def size(self):
        return len(self.itos)

    @property
    def tokens(self):
        return self.itos[len(RESERVED_TOKENS):]

    def lookup(self, token):
        """Id of a text token; reserved spellings in user text count as unknown."""
        return UNK if token in RESERVED_TOKENS else self.stoi.get(token, UNK)

    def encode(self, tokens):
        return [self.lookup(token) for token in tokens]

    def decode(self, ids, strip_special=True):
        out = []
        for i in ids:
            i = int(i)
            if strip_special and i in (PAD, BOS):
                continue
            if strip_special and i == EOS:
                break
            out.append(self.itos[i])
        return out

    def hash(self):
        return hashlib.sha256("\n".join(self.tokens).encode("utf-8")).hexdigest()[:16]

    def save(self, path):
        Path(path).write_text("".join(f"{token}\n" for token in self.tokens), encoding="utf-8")
        logger.info(f"Vocabulary of {self.size} ids written to {path}")

    @classmethod
    def load(cls, path):
        try:
            lines = Path(path).read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise CorpusError(f"Cannot read vocabulary {path}: {e}") from e
        return cls(line for line in lines if line)


def build_vocab(corpus, min_freq=1):
    """Ids in descending frequency, ties broken lexicographically.

    `corpus` holds strings, token lists, or BitextExamples (both sides count).
    """
    if min_freq < 1:
        raise CorpusError("min_freq must be >= 1")
    counts = Counter()
    sentences = 0
    for item in corpus:
        sentences += 1
        if isinstance(item, BitextExample):
            counts.update(item.src)
            counts.update(item.tgt)
        elif isinstance(item, str):
            counts.update(tokenize(item))
        else:
            counts.update(item)
    if sentences == 0:
        raise CorpusError("Cannot build a vocabulary from an empty corpus")
    kept = sorted((token for token, count in counts.items() if count >= min_freq and token not in RESERVED_TOKENS),
                  key=lambda token: (-counts[token], token))
    return Vocab(kept)


def _ids(sequence, vocab):
    return [token if isinstance(token, (int, np.integer)) else vocab.lookup(token) for token in sequence]


def encode_batch(examples, vocab, max_len, pad_to_max_len=True):
    """Pad a list of examples into one Batch.

    Targets are wrapped as BOS ... EOS and hard-truncated to `max_len` with
    EOS re-appended. Rows are padded to `max_len`, or to the longest row when
    `pad_to_max_len` is False.
    """
    if max_len < 2:
        raise CorpusError("max_len must be >= 2")
    if not examples:
        raise CorpusError("Cannot encode an empty batch")
    sources, targets = [], []
    for example in examples:
        src = _ids(example.src, vocab)[:max_len]
        tgt = [BOS] + _ids(example.tgt, vocab) + [EOS]
        if len(tgt) > max_len:
            tgt = tgt[:max_len - 1] + [EOS]
        sources.append(src)
        targets.append(tgt)

    src_width = max_len if pad_to_max_len else max(len(row) for row in sources)
    tgt_width = max_len if pad_to_max_len else max(len(row) for row in targets)
    src = np.full((len(examples), src_width), PAD, dtype=np.int64)
    tgt = np.full((len(examples), tgt_width), PAD, dtype=np.int64)
    for row, (s, t) in enumerate(zip(sources, targets)):
        src[row, :len(s)] = s
        tgt[row, :len(t)] = t
    return Batch(
        src=src,
        tgt=tgt,
        src_mask=src != PAD,
        tgt_mask=tgt != PAD,
        domains=np.array([example.domain for example in examples], dtype=np.int64),
    )


def read_tsv(path):
    examples = []
    try:
        with open(path, encoding="utf-8") as handle:
            for line_number, line in enumerate(handle, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                fields = line.split("\t")
                if len(fields) != 3:
                    raise CorpusError(f"{path}:{line_number}: expected 3 tab-separated fields, got {len(fields)}")
                try:
                    domain = int(fields[0])
                except ValueError:
                    raise CorpusError(f"{path}:{line_number}: domain '{fields[0]}' is not an integer") from None
                src, tgt = tokenize(fields[1]), tokenize(fields[2])
                if not src or not tgt:
                    raise CorpusError(f"{path}:{line_number}: empty source or target")
                examples.append(BitextExample(src=src, tgt=tgt, domain=domain))
    except OSError as e:
        raise CorpusError(f"Cannot read corpus {path}: {e}") from e
    logger.info(f"Read {len(examples)} examples from {path}")
    return examples


def write_tsv(path, examples):
    with open(path, "w", encoding="utf-8") as handle:
        for example in examples:
            handle.write(f"{example.domain}\t{detokenize(example.src)}\t{detokenize(example.tgt)}\n")
    logger.info(f"Wrote {len(examples)} examples to {path}")


def read_lines(path):
    with open(path, encoding="utf-8") as handle:
        return [tokenize(line) for line in handle.read().splitlines()]


def check_domains(examples, k):
    for i, example in enumerate(examples):
        if not 0 <= example.domain < k:
            raise CorpusError(f"Example {i} has domain {example.domain}, expected a value in [0, {k})")
