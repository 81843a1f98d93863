import logging
import time
from pathlib import Path

import numpy as np

from app.corpus.text import check_domains, encode_batch
from app.errors import CorpusError, TrainingDivergedError
from app.events import checkpoint_saved, step_completed, training_aborted, validation_scored
from app.evaluation import metrics
from app.storage import save_checkpoint
from app.tensor import backward
from app.training.model import compute_loss
from app.training.optim import Adam
from config import Config


logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)


class Trainer:
    """Runs optimisation steps over a shuffled training set.

    The data order, the dropout generator and the optimizer state are all
    part of `state_dict`, so a resumed run continues exactly where the saved
    one stopped.
    """

    def __init__(self, model, run_config, train_examples, vocab, valid_examples=None, output_dir=None,
                 checkpoint_path=None, config_class=Config):
        if not train_examples:
            raise CorpusError("Training set is empty")
        check_domains(train_examples, run_config.mixing.k)
        self.model = model
        self.run_config = run_config
        self.config = run_config.train
        self.train_examples = train_examples
        self.valid_examples = valid_examples or []
        self.vocab = vocab
        self.optimizer = Adam(model, self.config)
        self.data_rng = np.random.default_rng(self.config.seed)
        self.dropout_rng = np.random.default_rng(self.config.seed + 1)
        self.order = self.data_rng.permutation(len(train_examples))
        self.cursor = 0

        self.output_dir = Path(output_dir) if output_dir else None
        if self.output_dir is not None:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        self.metrics_path = self.output_dir / config_class.METRICS_NAME if self.output_dir else None
        if checkpoint_path is None and self.output_dir is not None:
            checkpoint_path = self.output_dir / config_class.CHECKPOINT_NAME
        self.checkpoint_path = Path(checkpoint_path) if checkpoint_path else None

    @property
    def step(self):
        return self.optimizer.step_count

    def next_batch(self):
        size = self.config.batch_size
        if self.cursor >= len(self.order):
            self.order = self.data_rng.permutation(len(self.train_examples))
            self.cursor = 0
        indices = self.order[self.cursor:self.cursor + size]
        self.cursor += size
        examples = [self.train_examples[i] for i in indices]
        return encode_batch(examples, self.vocab, self.run_config.model.max_len, pad_to_max_len=False)

    def train_step(self):
        started = time.perf_counter()
        batch = self.next_batch()
        self.model.train()
        self.optimizer.zero_grad()
        loss, breakdown, _ = compute_loss(self.model, batch, self.config, rng=self.dropout_rng)
        step = self.step + 1
        if not all(np.isfinite([breakdown.L_gen, breakdown.L_mix, breakdown.L_aux, breakdown.L_total])):
            training_aborted.send(self, step=step, breakdown=breakdown)
            raise TrainingDivergedError(step, breakdown.to_dict())
        backward(loss)
        lr = self.optimizer.step()
        elapsed_ms = (time.perf_counter() - started) * 1000.0 if self.config.log_elapsed else 0
        step_completed.send(self, step=step, lr=lr, breakdown=breakdown, elapsed_ms=elapsed_ms)
        return breakdown

    def train(self, max_steps=None):
        max_steps = self.config.max_steps if max_steps is None else max_steps
        if self.step == 0 and self.metrics_path is not None and self.metrics_path.exists():
            self.metrics_path.unlink()
        logger.info(f"Training from step {self.step} to step {max_steps}")
        breakdown = None
        while self.step < max_steps:
            breakdown = self.train_step()
            if self.config.save_every and self.step % self.config.save_every == 0:
                self.save()
            if self.config.eval_every and self.step % self.config.eval_every == 0:
                self.validate()
        self.save()
        return breakdown

    def validate(self):
        if not self.valid_examples:
            return None
        ppl = metrics.perplexity(self.model, self.valid_examples, self.vocab, self.run_config.model.max_len,
                                 self.config.batch_size)
        validation_scored.send(self, step=self.step, ppl=ppl)
        return ppl

    def state_dict(self):
        return {
            "order": [int(i) for i in self.order],
            "cursor": self.cursor,
            "data_rng": self.data_rng.bit_generator.state,
            "dropout_rng": self.dropout_rng.bit_generator.state,
        }

    def load_state_dict(self, state):
        self.order = np.asarray(state["order"], dtype=np.int64)
        self.cursor = int(state["cursor"])
        self.data_rng.bit_generator.state = state["data_rng"]
        self.dropout_rng.bit_generator.state = state["dropout_rng"]

    def tensors(self):
        tensors = dict(self.model.state_dict())
        tensors.update(self.optimizer.state.state_dict())
        return tensors

    def save(self):
        if self.checkpoint_path is None:
            return None
        path = save_checkpoint(
            self.checkpoint_path, self.run_config, self.vocab, self.tensors(),
            optimizer_step=self.step, trainer_state=self.state_dict(),
        )
        checkpoint_saved.send(self, path=path, step=self.step)
        return path

    def resume(self, checkpoint):
        """Restore parameters, Adam moments, step and data/dropout state."""
        self.model.load_state_dict(checkpoint.parameters)
        self.optimizer.state.load_state_dict(checkpoint.optimizer_tensors, checkpoint.optimizer_step)
        if checkpoint.trainer_state:
            self.load_state_dict(checkpoint.trainer_state)
        logger.info(f"Resumed training at step {self.step}")
        return self
