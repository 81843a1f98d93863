"""Proportion traces (JSONL) and max-proportion histograms (CSV)."""
import csv
import json
import logging

import numpy as np

from app.corpus.text import encode_batch
from app.errors import DomixError
from app.mixing.context import MixingContext
from app.models import BitextExample
from app.tensor import no_grad


logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)

HISTOGRAM_FIELDS = ("stack", "layer", "bin", "low", "high", "count")


def proportion_groups(transformer, with_decoder):
    groups = []
    if transformer.mixing.encoder_mixed:
        groups += [("enc", i) for i in range(transformer.config.enc_layers)]
    if with_decoder and transformer.mixing.decoder_mixed:
        groups += [("dec", i) for i in range(transformer.config.dec_layers)]
    return groups


def collect_traces(model, sources, vocab, targets=None, batch_size=32):
    """Run the model on each sentence and keep every proportion vector.

    Without targets only the encoder runs; with targets the decoder is
    teacher-forced and its records are traced on BOS + target positions.
    """
    transformer = getattr(model, "transformer", model)
    if not transformer.is_mixed:
        raise DomixError("Checkpoint has no proportion layers")
    max_len = transformer.config.max_len
    traces = []
    with transformer.evaluating(), no_grad():
        for start in range(0, len(sources), batch_size):
            chunk = sources[start:start + batch_size]
            chunk_targets = targets[start:start + batch_size] if targets is not None else None
            examples = [
                BitextExample(src=src, tgt=chunk_targets[i] if chunk_targets else [], domain=0)
                for i, src in enumerate(chunk)
            ]
            batch = encode_batch(examples, vocab, max_len, pad_to_max_len=False)
            context = MixingContext()
            state = transformer.encode(batch.src, batch.src_mask, context)
            shown_targets = None
            if chunk_targets is not None:
                transformer.decode(batch.decoder_input, batch.tgt_mask[:, :-1], state, context)
                inputs, input_mask = batch.decoder_input, batch.tgt_mask[:, :-1]
                shown_targets = [
                    [vocab.itos[int(i)] for i in inputs[row][input_mask[row]]] for row in range(batch.size)
                ]
            shown_sources = [list(src)[:max_len] for src in chunk]
            traces.extend(context.traces(shown_sources, shown_targets, start_id=start))
    return traces


def write_traces(path, traces):
    with open(path, "w", encoding="utf-8") as handle:
        for trace in traces:
            handle.write(json.dumps(trace.to_dict()) + "\n")
    logger.info(f"Wrote {len(traces)} proportion traces to {path}")


def max_proportion_histogram(traces, groups, k, bins=20):
    """Rows of (stack, layer, bin, low, high, count) for the largest entry of
    every proportion vector, binned over [1/k, 1]."""
    low = 1.0 / k if k > 1 else 0.0
    edges = np.linspace(low, 1.0, bins + 1)
    values = {group: [] for group in groups}
    for trace in traces:
        for record in trace.records:
            group = (record.stack, record.layer)
            if group in values:
                values[group].extend(max(vector) for vector in record.proportions)
    rows = []
    for stack, layer in groups:
        counts, _ = np.histogram(np.asarray(values[(stack, layer)], dtype=np.float64), bins=edges)
        for i, count in enumerate(counts):
            rows.append({
                "stack": stack,
                "layer": layer,
                "bin": i,
                "low": float(edges[i]),
                "high": float(edges[i + 1]),
                "count": int(count),
            })
    return rows


def write_histogram(path, rows):
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=HISTOGRAM_FIELDS)
        writer.writeheader()
        writer.writerows(rows)
    logger.info(f"Wrote {len(rows)} histogram rows to {path}")
