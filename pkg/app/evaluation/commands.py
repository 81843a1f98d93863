import json
import logging
from pathlib import Path

import click
import numpy as np
from flask import current_app as app

from app.corpus.text import Vocab, detokenize, read_lines, read_tsv, tokenize
from app.errors import DomixError, abort_command
from app.evaluation import evaluation
from app.evaluation.decoding import translate_ids
from app.evaluation.export import (
    collect_traces,
    max_proportion_histogram,
    proportion_groups,
    write_histogram,
    write_traces,
)
from app.evaluation.metrics import corpus_bleu, corpus_nll
from app.storage import check_vocab, load_checkpoint
from app.training.model import restore_model


logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)


def load_model(checkpoint_path):
    checkpoint = load_checkpoint(checkpoint_path)
    app.extensions["precision"].apply(checkpoint.config.precision)
    model = restore_model(checkpoint)
    model.eval()
    return checkpoint, model


def decode_lines(model, vocab, sentences, beam, greedy, length_penalty):
    max_len = model.run_config.model.max_len
    sources = [vocab.encode(tokens)[:max_len] for tokens in sentences]
    outputs = translate_ids(model, sources, beam=beam, length_penalty=length_penalty, greedy=greedy)
    return [vocab.decode(ids) for ids in outputs]


@evaluation.cli.command("translate")
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(dir_okay=False))
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--output", "output_path", required=True, type=click.Path(dir_okay=False))
@click.option("--beam", type=int, default=None, help="Beam size (default 5).")
@click.option("--greedy", is_flag=True, help="Argmax decoding instead of beam search.")
@click.option("--vocab", "vocab_path", type=click.Path(dir_okay=False), help="Vocabulary the input was prepared with.")
@click.option("--length-penalty", type=float, default=None)
def translate(checkpoint_path, input_path, output_path, beam, greedy, vocab_path, length_penalty):
    """Translate one sentence per line of --input into --output."""
    try:
        beam = app.config["DEFAULT_BEAM"] if beam is None else beam
        if beam < 1:
            raise DomixError("--beam must be >= 1")
        length_penalty = app.config["LENGTH_PENALTY"] if length_penalty is None else length_penalty
        checkpoint, model = load_model(checkpoint_path)
        if vocab_path:
            check_vocab(checkpoint, Vocab.load(vocab_path))
        sentences = read_lines(input_path)
        outputs = decode_lines(model, checkpoint.vocab, sentences, beam, greedy, length_penalty)
        with open(output_path, "w", encoding="utf-8") as handle:
            handle.write("".join(f"{detokenize(tokens)}\n" for tokens in outputs))
        logger.info(f"Translated {len(outputs)} sentences into {output_path}")

    except DomixError as e:
        abort_command("Translation failed.", e)

    except OSError as e:
        abort_command("File error.", e)

    except Exception as e:
        abort_command("Internal error.", e, status=2)


def _score_group(model, vocab, examples, hypotheses, max_len):
    """Report for one group of examples plus its summed NLL and token count."""
    if not examples:
        return {"sentences": 0, "bleu": None, "ppl": None}, 0.0, 0
    nll, tokens = corpus_nll(model, examples, vocab, max_len)
    report = {
        "sentences": len(examples),
        "bleu": corpus_bleu(hypotheses, [example.tgt for example in examples]),
        "ppl": float(np.exp(nll / tokens)),
    }
    return report, nll, tokens


@evaluation.cli.command("score")
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(dir_okay=False))
@click.option("--test", "test_path", type=click.Path(dir_okay=False), help="Labelled TSV (default: paths.test).")
@click.option("--beam", type=int, default=None)
@click.option("--greedy", is_flag=True)
@click.option("--output", "output_path", type=click.Path(dir_okay=False), help="Also write the report here.")
def score(checkpoint_path, test_path, beam, greedy, output_path):
    """BLEU and perplexity, overall and per domain, as JSON."""
    try:
        beam = app.config["DEFAULT_BEAM"] if beam is None else beam
        checkpoint, model = load_model(checkpoint_path)
        test_path = test_path or checkpoint.config.paths.test
        if test_path is None:
            raise DomixError("No test set: pass --test or set paths.test")
        examples = read_tsv(test_path)
        if not examples:
            raise DomixError(f"Test set {test_path} is empty")
        vocab = checkpoint.vocab
        max_len = checkpoint.config.model.max_len
        hypotheses = decode_lines(model, vocab, [example.src for example in examples], beam, greedy,
                                  app.config["LENGTH_PENALTY"])

        k = checkpoint.config.mixing.k
        per_domain = []
        total_nll, total_tokens = 0.0, 0
        for domain in range(max(k, 1 + max(example.domain for example in examples))):
            rows = [i for i, example in enumerate(examples) if example.domain == domain]
            report, nll, tokens = _score_group(
                model, vocab, [examples[i] for i in rows], [hypotheses[i] for i in rows], max_len,
            )
            per_domain.append({"domain": domain, **report})
            total_nll += nll
            total_tokens += tokens

        overall = {
            "sentences": len(examples),
            "bleu": corpus_bleu(hypotheses, [example.tgt for example in examples]),
            "ppl": float(np.exp(total_nll / total_tokens)),
        }
        result = {"overall": overall, "per_domain": per_domain}
        if output_path:
            Path(output_path).write_text(json.dumps(result, indent=2), encoding="utf-8")
        click.echo(json.dumps(result))

    except DomixError as e:
        abort_command("Scoring failed.", e)

    except OSError as e:
        abort_command("File error.", e)

    except Exception as e:
        abort_command("Internal error.", e, status=2)


def _read_inspect_input(path):
    """Plain lines trace the encoder; domain<TAB>src<TAB>tgt lines also
    trace the teacher-forced decoder."""
    with open(path, encoding="utf-8") as handle:
        lines = [line for line in handle.read().splitlines() if line.strip()]
    if lines and all(line.count("\t") == 2 for line in lines):
        examples = read_tsv(path)
        return [example.src for example in examples], [example.tgt for example in examples]
    return [tokens for tokens in (tokenize(line) for line in lines) if tokens], None


@evaluation.cli.command("inspect")
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(dir_okay=False))
@click.option("--input", "input_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--bins", type=int, default=None)
def inspect(checkpoint_path, input_path, out_dir, bins):
    """Export per-token domain proportions and their histograms."""
    try:
        bins = app.config["HISTOGRAM_BINS"] if bins is None else bins
        checkpoint, model = load_model(checkpoint_path)
        if not model.is_mixed:
            raise DomixError("Checkpoint has no proportion layers")
        sources, targets = _read_inspect_input(input_path)
        traces = collect_traces(model, sources, checkpoint.vocab, targets=targets)

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_traces(out / "traces.jsonl", traces)
        groups = proportion_groups(model.transformer, with_decoder=targets is not None)
        rows = max_proportion_histogram(traces, groups, checkpoint.config.mixing.k, bins=bins)
        write_histogram(out / "histogram.csv", rows)
        click.echo(json.dumps({"sentences": len(traces), "groups": len(groups), "histogram_rows": len(rows)}))

    except DomixError as e:
        abort_command("Inspection failed.", e)

    except OSError as e:
        abort_command("File error.", e)

    except Exception as e:
        abort_command("Internal error.", e, status=2)
