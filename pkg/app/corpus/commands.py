import json
import logging
from pathlib import Path

import click

from app.corpus import corpus
from app.corpus.synthetic import SPLITS, domain_counts, generate_synthetic
from app.corpus.text import build_vocab, write_tsv
from app.errors import DomixError, abort_command
from app.settings import load_synthetic_spec


logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)


@corpus.cli.command("gen-data")
@click.option("--spec", "spec_path", required=True, type=click.Path(dir_okay=False))
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--seed", type=int, default=None, help="Overrides the spec's seed.")
def gen_data(spec_path, out_dir, seed):
    """Write synthetic train/valid/test TSV files and the shared vocabulary."""
    try:
        spec = load_synthetic_spec(spec_path, seed=seed)
        splits = generate_synthetic(spec)

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for split in SPLITS:
            write_tsv(out / f"{split}.tsv", splits[split])
        vocab = build_vocab(example for split in SPLITS for example in splits[split])
        vocab.save(out / "vocab.txt")

        counts = {split: domain_counts(splits[split], spec.k) for split in SPLITS}
        click.echo(json.dumps({"counts": counts, "vocab_size": vocab.size, "vocab_hash": vocab.hash()}))

    except DomixError as e:
        abort_command("Data generation failed.", e)

    except OSError as e:
        abort_command("Output directory is not writable.", e)

    except Exception as e:
        abort_command("Internal error.", e, status=2)
