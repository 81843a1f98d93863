import json
import logging

from blinker import Namespace


logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)

training_signals = Namespace()
step_completed = training_signals.signal("step-completed")
checkpoint_saved = training_signals.signal("checkpoint-saved")
validation_scored = training_signals.signal("validation-scored")
training_aborted = training_signals.signal("training-aborted")


def metrics_record(step, lr, breakdown, elapsed_ms):
    return {
        "step": step,
        "lr": lr,
        "L_gen": breakdown.L_gen,
        "L_mix": breakdown.L_mix,
        "L_total": breakdown.L_total,
        "elapsed_ms": elapsed_ms,
    }


def append_metrics(trainer, step, lr, breakdown, elapsed_ms):
    if trainer.metrics_path is None:
        return
    with open(trainer.metrics_path, "a", encoding="utf-8") as handle:
        handle.write(json.dumps(metrics_record(step, lr, breakdown, elapsed_ms)) + "\n")


def log_step(trainer, step, lr, breakdown, elapsed_ms):
    every = trainer.config.log_every
    if every and step % every == 0:
        logger.info(
            f"Step {step}: lr={lr:.3e} L_gen={breakdown.L_gen:.4f} L_mix={breakdown.L_mix:.4f} "
            f"L_aux={breakdown.L_aux:.4f} L_total={breakdown.L_total:.4f}"
        )


def log_checkpoint(trainer, path, step):
    logger.info(f"Checkpoint for step {step} saved to {path}")


def log_validation(trainer, step, ppl):
    logger.info(f"Step {step}: validation perplexity {ppl:.4f}")


def log_abort(trainer, step, breakdown):
    logger.error(f"Training aborted at step {step}: non-finite loss {breakdown.to_dict()}")


step_completed.connect(append_metrics)
step_completed.connect(log_step)
checkpoint_saved.connect(log_checkpoint)
validation_scored.connect(log_validation)
training_aborted.connect(log_abort)
