"""Training loop coordinating model, optimizer state, data and metrics."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import autodiff as F
from ..autodiff import Tensor
from ..data import Dataset, load_checkpoint, save_checkpoint
from ..dist import elbo, nats_to_bpd, to_unit_interval
from ..errors import TrainingDivergedError
from ..model import ModelConfig, Parameters, VeryDeepVAE
from .config import TrainConfig
from .losses import training_loss
from .metrics import MetricsLog, StepRecord
from .normalization import NormStats, compute_stats, float32_stats, normalize_input
from .optim import UpdateOutcome, maybe_skip_update, should_skip
from .state import TrainState

logger = logging.getLogger(__name__)

# Skip rates above this fraction flag a run as unhealthy.
SKIP_FRACTION_WARN = 1e-4
METRICS_FILE = "metrics.csv"
FINAL_CHECKPOINT = "final.vdvc"


@dataclass
class EvalResult:
    nats: float
    bits_per_dim: float
    kl_per_layer: list[float] = field(default_factory=list)  # nats per subpixel
    n_images: int = 0

    @property
    def kl_nats(self) -> float:
        return float(sum(self.kl_per_layer))

    def to_dict(self) -> dict:
        return {
            "nats": self.nats,
            "bits_per_dim": self.bits_per_dim,
            "kl_per_layer": list(self.kl_per_layer),
            "n_images": self.n_images,
        }


def model_inputs(images: np.ndarray, stats: NormStats, dtype) -> tuple[Tensor, np.ndarray]:
    """(normalized network input, [-1, 1] likelihood targets), both NCHW."""
    x_in = Tensor(normalize_input(images, stats, dtype=dtype), dtype=dtype)
    targets = to_unit_interval(np.asarray(images).transpose(0, 3, 1, 2), dtype=dtype)
    return x_in, targets


def evaluate(model: VeryDeepVAE, params: Parameters, images: np.ndarray, stats: NormStats,
             batch_size: int = 64, seed: int = 0) -> EvalResult:
    """One posterior sample per image; losses averaged per subpixel over all images."""
    total, n_seen = 0.0, 0
    kl_totals = np.zeros(model.stochastic_depth, dtype=np.float64)
    dtype = params.tensors()[0].dtype
    with F.no_grad():
        for i, start in enumerate(range(0, len(images), batch_size)):
            batch = images[start:start + batch_size]
            x_in, targets = model_inputs(batch, stats, dtype)
            dmol, state = model.forward(params, x_in, rng=np.random.default_rng([seed, i]))
            result = elbo(targets, state, dmol)
            total += result.nats * len(batch)
            kl_totals += np.array(result.kl_values()) * len(batch)
            n_seen += len(batch)
    nats = total / n_seen
    return EvalResult(nats=nats, bits_per_dim=nats_to_bpd(nats),
                      kl_per_layer=(kl_totals / n_seen).tolist(), n_images=n_seen)


class Trainer:
    """Owns the model, its TrainState, the dataset and the metrics log."""

    def __init__(self, dataset: Dataset, model_config: ModelConfig | None = None,
                 train_config: TrainConfig | None = None, out_dir: str | Path | None = None,
                 state: TrainState | None = None, metrics: MetricsLog | None = None):
        if state is None:
            if model_config is None or train_config is None:
                raise ValueError("model_config and train_config are required without a state")
            train_config.validate()
            model = VeryDeepVAE(model_config)
            params = model.init_params(np.random.default_rng(train_config.seed))
            stats = float32_stats(compute_stats(dataset.train))
            state = TrainState.initialize(params, stats, model_config, train_config)
        else:
            if train_config is not None:
                state.train_config = train_config.validate()
            model = VeryDeepVAE(state.model_config)
        self.model = model
        self.state = state
        self.dataset = dataset
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.metrics = metrics or MetricsLog(n_layers=model.stochastic_depth)

    @classmethod
    def resume(cls, checkpoint: str | Path | TrainState, dataset: Dataset, out_dir: str | Path | None = None,
               train_config: TrainConfig | None = None) -> Trainer:
        """Continue from a checkpoint file or an already loaded state, keeping metric rows recorded before its step."""
        state = checkpoint if isinstance(checkpoint, TrainState) else load_checkpoint(checkpoint)
        metrics = None
        if out_dir is not None and (Path(out_dir) / METRICS_FILE).is_file():
            metrics = MetricsLog.read_csv(Path(out_dir) / METRICS_FILE)
            metrics.truncate(state.step)
        return cls(dataset, train_config=train_config, out_dir=out_dir, state=state, metrics=metrics)

    @property
    def config(self) -> TrainConfig:
        return self.state.train_config

    @property
    def dtype(self):
        return self.state.params.tensors()[0].dtype

    def batch_indices(self, step: int) -> np.ndarray:
        """Batch composition is a pure function of (seed, step)."""
        n = len(self.dataset.train)
        rng = np.random.default_rng([self.config.seed, step])
        return rng.choice(n, size=self.config.batch_size, replace=self.config.batch_size > n)

    def train_step(self, images: np.ndarray | None = None) -> StepRecord:
        """Forward, backward and a possibly-skipped update on one batch."""
        state = self.state
        step = state.step
        if images is None:
            images = self.dataset.train[self.batch_indices(step)]
        x_in, targets = model_inputs(images, state.stats, self.dtype)

        state.params.zero_grad()
        dmol, td_state = self.model.forward(state.params, x_in,
                                            rng=np.random.default_rng([self.config.seed, step, 1]))
        loss, report = training_loss(targets, td_state, dmol, self.config.kl_phase, check_finite=False)
        loss.backward()
        grad_norm = F.global_grad_norm(state.params.tensors())
        grads = {name: t.grad for name, t in state.params.items()}

        loss_nats = report.nats
        if not math.isfinite(loss_nats) and not should_skip(grad_norm, self.config.skip_threshold):
            self._dump_diverged(step)
            raise TrainingDivergedError(step, f"non-finite loss {loss_nats} with gradient norm {grad_norm:.4g}")

        outcome = maybe_skip_update(state, grads, grad_norm)
        state.step += 1

        record = self.metrics.append(StepRecord(
            step=step,
            applied=state.applied_count,
            loss_nats=loss_nats,
            loss_bpd=nats_to_bpd(loss_nats),
            grad_norm=grad_norm,
            skipped=outcome is UpdateOutcome.SKIPPED,
            kl_per_layer=tuple(report.kl_values()),
        ))
        if step % self.config.log_every == 0:
            logger.info("step %d: loss %.4f nats (%.4f bpd), grad norm %.3g, skipped %d",
                        step, loss_nats, record.loss_bpd, grad_norm, state.skip_count)
        return record

    def _dump_diverged(self, step: int) -> None:
        """Save the state the failing step started from; resuming from it replays that step."""
        if self.out_dir is None:
            return
        path = save_checkpoint(self.out_dir / f"diverged-step{step}.vdvc", self.state)
        logger.error("Training diverged at step %d; state dumped to %s", step, path)

    def save(self, name: str | None = None) -> Path | None:
        if self.out_dir is None:
            return None
        path = save_checkpoint(self.out_dir / (name or f"ckpt-{self.state.step}.vdvc"), self.state)
        self.metrics.write_csv(self.out_dir / METRICS_FILE)
        return path

    def run(self, total_steps: int | None = None) -> EvalResult | None:
        """Train up to total_steps, checkpoint, then evaluate the EMA weights on the val split."""
        target = self.config.total_steps if total_steps is None else total_steps
        every = self.config.checkpoint_every
        while self.state.step < target:
            self.train_step()
            if every and self.state.step % every == 0:
                self.save()
        self.save(FINAL_CHECKPOINT)

        if self.state.skip_fraction > SKIP_FRACTION_WARN:
            logger.warning("Skipped %d of %d updates (%.4f%%), above the %.2f%% healthy rate",
                           self.state.skip_count, self.state.step, 100 * self.state.skip_fraction,
                           100 * SKIP_FRACTION_WARN)
        if len(self.dataset.val) == 0:
            return None
        result = evaluate(self.model, self.state.ema, self.dataset.val, self.state.stats,
                          batch_size=self.config.eval_batch_size, seed=self.config.seed)
        logger.info("EMA validation: %.4f nats/subpixel (%.4f bpd)", result.nats, result.bits_per_dim)
        return result


def train(train_config: TrainConfig, model_config: ModelConfig, dataset: Dataset,
          out_dir: str | Path | None = None,
          resume: str | Path | TrainState | None = None) -> tuple[Trainer, EvalResult | None]:
    if resume is not None:
        trainer = Trainer.resume(resume, dataset, out_dir=out_dir, train_config=train_config)
    else:
        trainer = Trainer(dataset, model_config, train_config, out_dir=out_dir)
    return trainer, trainer.run()
