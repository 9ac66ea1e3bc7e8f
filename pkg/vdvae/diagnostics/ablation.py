"""Depth, layer-distribution and residual-scaling ablations at desk scale."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from ..data import Dataset
from ..errors import ConfigError, NonFiniteError, TrainingDivergedError
from ..model import ModelConfig, VeryDeepVAE, group_independent, parse_block_spec
from ..training import TrainConfig, Trainer

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AblationCell:
    config: str
    seed: int
    val_loss_bpd: float
    params: int
    fingerprint: str
    effective_depth: int
    skipped: int = 0
    diverged: bool = False


@dataclass
class AblationResult:
    kind: str
    cells: list[AblationCell] = field(default_factory=list)

    def configs(self) -> list[str]:
        return list(dict.fromkeys(c.config for c in self.cells))

    def mean_loss(self) -> dict[str, float]:
        """Mean validation bits/dim per configuration, over seeds that did not diverge."""
        out = {}
        for name in self.configs():
            losses = [c.val_loss_bpd for c in self.cells if c.config == name and not c.diverged]
            out[name] = float(np.mean(losses)) if losses else math.nan
        return out

    def parameter_counts(self) -> set[int]:
        return {c.params for c in self.cells}

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["config", "seed", "val_loss_bpd", "params"])
            for cell in self.cells:
                writer.writerow([cell.config, cell.seed, repr(cell.val_loss_bpd), cell.params])


def _train_cell(label: str, model_config: ModelConfig, train_config: TrainConfig, seed: int,
                dataset: Dataset) -> AblationCell:
    trainer = Trainer(dataset, model_config, replace(train_config, seed=seed))
    diverged = False
    try:
        result = trainer.run()
        loss = result.bits_per_dim if result is not None else math.nan
    except (TrainingDivergedError, NonFiniteError) as exc:
        logger.warning("%s seed %d diverged: %s", label, seed, exc)
        loss, diverged = math.nan, True
    cell = AblationCell(config=label, seed=seed, val_loss_bpd=loss, params=trainer.state.params.count(),
                        fingerprint=trainer.state.params.fingerprint(),
                        effective_depth=trainer.model.effective_depth,
                        skipped=trainer.state.skip_count, diverged=diverged)
    logger.info("%s seed %d: %.4f bpd (%d params, depth %d)", label, seed, loss, cell.params,
                cell.effective_depth)
    return cell


def depth_ablation(base: ModelConfig, group_sizes: Sequence[int], seeds: Sequence[int],
                   train_config: TrainConfig, dataset: Dataset) -> AblationResult:
    """Vary effective stochastic depth by grouping K blocks; parameters stay identical."""
    for k in group_sizes:
        group_independent(base.dec_spec, k)
    result = AblationResult(kind="depth")
    for k in group_sizes:
        config = replace(base, independent_group_size=k)
        depth = VeryDeepVAE(config).effective_depth
        for seed in seeds:
            result.cells.append(_train_cell(f"depth{depth}", config, train_config, seed, dataset))
    fingerprints = {c.fingerprint for c in result.cells}
    if len(fingerprints) > 1 or len(result.parameter_counts()) > 1:
        raise ConfigError(f"depth ablation cells differ in parameters: {sorted(result.parameter_counts())}")
    return result


def layer_distribution_ablation(base: ModelConfig, dec_specs: Sequence[str], seeds: Sequence[int],
                                train_config: TrainConfig, dataset: Dataset) -> AblationResult:
    """Same total block count spread differently across decoder resolutions."""
    totals = {spec: parse_block_spec(spec).total_blocks for spec in dec_specs}
    if len(set(totals.values())) > 1:
        raise ConfigError(f"decoder specs have unequal block totals: {totals}")
    result = AblationResult(kind="layers")
    for spec in dec_specs:
        config = replace(base, dec_blocks=spec)
        for seed in seeds:
            result.cells.append(_train_cell(spec, config, train_config, seed, dataset))
    return result


def with_decoder_depth(base: ModelConfig, depth: int) -> ModelConfig:
    """Put enough blocks at the finest decoder resolution for `depth` layers in total."""
    ladder = list(base.dec_spec.ladder)
    head = sum(count for _, count in ladder[:-1])
    if depth <= head:
        raise ConfigError(f"depth {depth} leaves no blocks at the finest resolution (coarser ones hold {head})")
    ladder[-1] = (ladder[-1][0], depth - head)
    return replace(base, dec_blocks=",".join(f"{r}x{c}" for r, c in ladder), independent_group_size=1)


def residual_scaling_ablation(base: ModelConfig, depths: Sequence[int], seeds: Sequence[int],
                              train_config: TrainConfig, dataset: Dataset) -> AblationResult:
    """Train each depth with and without 1/sqrt(N) residual scaling."""
    result = AblationResult(kind="scaling")
    for depth in depths:
        for scaled in (True, False):
            config = replace(with_decoder_depth(base, depth), residual_scaling=scaled)
            label = f"depth{depth}-{'scaled' if scaled else 'unscaled'}"
            for seed in seeds:
                result.cells.append(_train_cell(label, config, train_config, seed, dataset))
    return result
