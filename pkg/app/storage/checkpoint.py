"""Checkpoint file: an 8-byte little-endian manifest length, the JSON
manifest, then every tensor as raw little-endian bytes in manifest order."""
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from app.corpus.text import Vocab
from app.errors import CheckpointError, VocabMismatchError
from app.models import RunConfig


logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
DTYPE_CODES = {np.dtype(np.float32): "<f4", np.dtype(np.float64): "<f8"}


@dataclass
class Checkpoint:
    config: RunConfig
    vocab: Vocab
    tensors: dict
    optimizer_step: int = 0
    trainer_state: dict = field(default_factory=dict)

    @property
    def parameters(self):
        return {name: value for name, value in self.tensors.items() if not name.startswith("adam.")}

    @property
    def optimizer_tensors(self):
        return {name: value for name, value in self.tensors.items() if name.startswith("adam.")}


def payload_hash(tensors):
    digest = hashlib.sha256()
    for name, value in tensors.items():
        digest.update(name.encode("utf-8"))
        digest.update(np.ascontiguousarray(value).astype(value.dtype.newbyteorder("<"), copy=False).tobytes())
    return digest.hexdigest()


def save_checkpoint(path, run_config, vocab, tensors, optimizer_step=0, trainer_state=None):
    entries = []
    chunks = []
    offset = 0
    for name, value in tensors.items():
        value = np.ascontiguousarray(value)
        if value.dtype not in DTYPE_CODES:
            raise CheckpointError(f"Tensor {name} has unsupported dtype {value.dtype}")
        code = DTYPE_CODES[value.dtype]
        raw = value.astype(code, copy=False).tobytes()
        entries.append({"name": name, "shape": list(value.shape), "dtype": code, "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)

    manifest = {
        "format_version": FORMAT_VERSION,
        "config": run_config.to_dict(),
        "vocab": vocab.tokens,
        "vocab_hash": vocab.hash(),
        "tensors": entries,
        "optimizer": {"step": int(optimizer_step)},
        "trainer": trainer_state or {},
    }
    header = json.dumps(manifest).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as handle:
        handle.write(len(header).to_bytes(8, "little"))
        handle.write(header)
        for chunk in chunks:
            handle.write(chunk)
    tmp.replace(path)
    logger.info(f"Checkpoint with {len(entries)} tensors ({offset} bytes) written to {path}")
    return path


def _read_manifest(handle, path):
    raw_length = handle.read(8)
    if len(raw_length) != 8:
        raise CheckpointError(f"{path}: truncated manifest length")
    length = int.from_bytes(raw_length, "little")
    header = handle.read(length)
    if len(header) != length:
        raise CheckpointError(f"{path}: truncated manifest")
    try:
        manifest = json.loads(header.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: manifest is not valid JSON: {e}") from e
    if manifest.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {manifest.get('format_version')}")
    return manifest


def load_checkpoint(path):
    try:
        with open(path, "rb") as handle:
            manifest = _read_manifest(handle, path)
            payload = handle.read()
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    tensors = {}
    for entry in manifest["tensors"]:
        start, end = entry["offset"], entry["offset"] + entry["nbytes"]
        if end > len(payload):
            raise CheckpointError(f"{path}: payload too short for tensor {entry['name']}")
        value = np.frombuffer(payload[start:end], dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        tensors[entry["name"]] = value.astype(value.dtype.newbyteorder("="))

    vocab = Vocab(manifest["vocab"])
    if vocab.hash() != manifest["vocab_hash"]:
        raise VocabMismatchError(manifest["vocab_hash"], vocab.hash())
    logger.info(f"Loaded checkpoint {path} with {len(tensors)} tensors")
    return Checkpoint(
        config=RunConfig.from_dict(manifest["config"]).validate(),
        vocab=vocab,
        tensors=tensors,
        optimizer_step=manifest["optimizer"]["step"],
        trainer_state=manifest.get("trainer", {}),
    )


def check_vocab(checkpoint, vocab):
    if checkpoint.vocab.hash() != vocab.hash():
        raise VocabMismatchError(checkpoint.vocab.hash(), vocab.hash())
