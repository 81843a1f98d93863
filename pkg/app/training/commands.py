import json
import logging
from pathlib import Path

import click
from flask import current_app as app

from app.corpus.text import Vocab, build_vocab, read_tsv
from app.errors import ConfigError, DomixError, TrainingDivergedError, abort_command
from app.models import RunConfig
from app.settings import load_run_config, require_paths
from app.storage import check_vocab, load_checkpoint
from app.training import training
from app.training.diagnostics import run_gradcheck
from app.training.loop import Trainer
from app.training.model import build_model


logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)

PRECISIONS = click.Choice(["f32", "f64"])


def prepare_run(config_path, seed, precision):
    run_config = load_run_config(config_path, seed=seed, precision=precision)
    app.extensions["precision"].apply(run_config.precision)
    require_paths(run_config, "train")
    if run_config.paths.valid is not None:
        require_paths(run_config, "valid")

    train_examples = read_tsv(run_config.paths.train)
    valid_examples = read_tsv(run_config.paths.valid) if run_config.paths.valid else []
    if run_config.paths.vocab is not None:
        require_paths(run_config, "vocab")
        vocab = Vocab.load(run_config.paths.vocab)
    else:
        vocab = build_vocab(train_examples + valid_examples)
    if run_config.model.vocab_size != vocab.size:
        logger.info(f"model.vocab_size set to {vocab.size} from the vocabulary")
        run_config.model.vocab_size = vocab.size
    return run_config, vocab, train_examples, valid_examples


@training.cli.command("train")
@click.option("--config", "config_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", type=int, default=None, help="Overrides train.seed.")
@click.option("--precision", type=PRECISIONS, default=None, help="Overrides the config precision.")
@click.option("--resume", is_flag=True, help="Continue from the checkpoint at paths.checkpoint.")
def train(config_path, seed, precision, resume):
    """Train a model from a JSON run config."""
    try:
        run_config, vocab, train_examples, valid_examples = prepare_run(config_path, seed, precision)
        output_dir = run_config.paths.output_dir or str(Path(config_path).resolve().parent)
        model = build_model(run_config)
        trainer = Trainer(
            model, run_config, train_examples, vocab,
            valid_examples=valid_examples,
            output_dir=output_dir,
            checkpoint_path=run_config.paths.checkpoint,
        )
        if resume:
            if trainer.checkpoint_path is None or not trainer.checkpoint_path.exists():
                raise ConfigError("paths.checkpoint", "no checkpoint to resume from")
            checkpoint = load_checkpoint(trainer.checkpoint_path)
            check_vocab(checkpoint, vocab)
            trainer.resume(checkpoint)

        breakdown = trainer.train()
        click.echo(json.dumps({
            "step": trainer.step,
            "checkpoint": str(trainer.checkpoint_path),
            "metrics": str(trainer.metrics_path),
            "loss": breakdown.to_dict() if breakdown is not None else None,
        }))

    except ConfigError as e:
        abort_command("Invalid configuration.", e)

    except TrainingDivergedError as e:
        abort_command("Training diverged.", e)

    except DomixError as e:
        abort_command("Training failed.", e)

    except OSError as e:
        abort_command("File error.", e)

    except Exception as e:
        abort_command("Internal error.", e, status=2)


def _format_report(report, contract):
    lines = [f"{'parameter':<48} {'shape':<14} {'max|grad|':>12} {'rel.err':>12}  result"]
    for check in report.checks:
        verdict = "ok" if check.max_rel_error < report.tolerance else "FAIL"
        shape = "x".join(str(n) for n in check.shape)
        lines.append(f"{check.name:<48} {shape:<14} {check.max_abs_grad:>12.4e} {check.max_rel_error:>12.4e}  {verdict}")
    if contract.applicable:
        lines.append(f"dL_gen/dR max |grad| = {contract.gen_router_grad}")
        lines.append(f"dL_mix/dtheta max |grad| = {contract.mix_transformer_grad}")
    passed = report.passed and contract.passed
    lines.append(f"{'PASS' if passed else 'FAIL'} (max relative error {report.max_rel_error:.3e})")
    return "\n".join(lines), passed


@training.cli.command("gradcheck")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Run config (tiny defaults if omitted).")
@click.option("--seed", type=int, default=None)
@click.option("--json", "as_json", is_flag=True, help="Print the report as JSON.")
def gradcheck(config_path, seed, as_json):
    """Compare every analytic gradient of a tiny 64-bit model with central differences."""
    try:
        run_config = load_run_config(config_path) if config_path else RunConfig().validate()
        seed = app.config["SEED"] if seed is None else seed
        report, contract = run_gradcheck(
            run_config,
            seed=seed,
            step=app.config["GRADCHECK_STEP"],
            tolerance=app.config["GRADCHECK_TOLERANCE"],
            max_d=app.config["GRADCHECK_MAX_D"],
        )
        table, passed = _format_report(report, contract)
        if as_json:
            click.echo(json.dumps({**report.to_dict(), "passed": passed, "contract": contract.to_dict()}))
        else:
            click.echo(table)

    except ConfigError as e:
        abort_command("Invalid configuration.", e)

    except DomixError as e:
        abort_command("Gradient check failed to run.", e)

    except Exception as e:
        abort_command("Internal error.", e, status=2)

    finally:
        app.extensions["precision"].apply(app.config["PRECISION"])

    if not passed:
        raise SystemExit(1)
