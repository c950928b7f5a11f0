"""
Full pre-training loop: shuffle -> augment -> select positives -> train step.

All randomness comes from the run's root seed: tower initialisation, the
per-epoch shuffle, the per-step augmentation draws and the selection policy
stream are each derived from it with their own tag.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from config.env import get_checkpoint_config
from config.run_config import RunConfig
from engine.byol.ema import EmaSchedule
from engine.byol.towers import ByolTowers, TowerTopology
from engine.byol.trainer import ByolTrainer
from engine.data.dataset import Dataset
from engine.data.views import make_views
from engine.errors import ConfigError
from engine.nn_core.optim import SgdState
from engine.nn_core.schedules import get_lr_schedule
from engine.seeding import derive_seed, make_rng
from engine.selection.kinds import PolicyKind
from engine.selection.policies import SelectionPolicy, select
from tools.checkpoint.checkpoint_store import load_checkpoint, save_checkpoint
from tools.reporting.csv_writers import METRICS_FILE, MetricsLog, SelectionDump

logger = logging.getLogger(__name__)

_CHECKPOINTS = get_checkpoint_config()
CHECKPOINT_DIR = _CHECKPOINTS.get("directory", "checkpoints")
CHECKPOINT_SUFFIX = _CHECKPOINTS.get("suffix", ".npz")


@dataclass
class EpochMetrics:
    epoch: int
    steps: int
    loss_main: float
    loss_additional: float
    loss_total: float
    lr: float
    tau: float
    tp_rate: Optional[float] = None


@dataclass
class PretrainResult:
    towers: ByolTowers
    trainer: ByolTrainer
    epochs: List[EpochMetrics] = field(default_factory=list)
    steps: int = 0
    final_checkpoint: Optional[Path] = None

    @property
    def tp_rate_curve(self) -> List[float]:
        return [m.tp_rate for m in self.epochs if m.tp_rate is not None]


def build_topology(config: RunConfig, input_dim: int) -> TowerTopology:
    model = config.model
    return TowerTopology.from_widths(input_dim, model.encoder_widths, model.hidden_dim, model.embedding_dim,
                                     model.activation, model.encoder_final_activation)


def steps_per_epoch(config: RunConfig, dataset_size: int) -> int:
    """Batches per epoch; the last partial batch is dropped."""
    return dataset_size // config.train.batch_size


def build_trainer(config: RunConfig, input_dim: int, total_steps: int,
                  towers: Optional[ByolTowers] = None) -> ByolTrainer:
    if towers is None:
        towers = initial_towers(config, input_dim)
    train = config.train
    optimizer = SgdState.for_parameters(towers.online_parameters(), train.momentum, train.weight_decay)
    ema = EmaSchedule(tau_base=train.tau_base, total_steps=total_steps, mode=train.ema_mode)
    return ByolTrainer(towers, optimizer, ema, symmetrize_additional=train.symmetrize_additional)


def initial_towers(config: RunConfig, input_dim: int) -> ByolTowers:
    """The untrained towers a run starts from (the random-encoder baseline)."""
    return ByolTowers.initialize(build_topology(config, input_dim), make_rng(config.seed, "init"))


def vanilla_config(config: RunConfig) -> RunConfig:
    """Same settings with plain BYOL: no additional positive, lambda 0."""
    vanilla = config.model_copy(deep=True)
    vanilla.policy.kind = PolicyKind.NONE
    vanilla.policy.reference_checkpoint = None
    vanilla.train.lambda_ = 0.0
    return vanilla


def reference_model(config: RunConfig, dataset: Dataset) -> ByolTowers:
    """
    Frozen model for *_PRETRAINED policies: loaded from
    ``policy.reference_checkpoint`` when set, otherwise trained by a vanilla
    BYOL run with the same settings.
    """
    topology = build_topology(config, dataset.meta.dim)
    if config.policy.reference_checkpoint:
        logger.info(f"Loading reference model from {config.policy.reference_checkpoint}")
        return load_checkpoint(config.policy.reference_checkpoint, expected=topology).towers
    logger.info("Training reference model with vanilla BYOL")
    vanilla = vanilla_config(config)
    return pretrain(vanilla, dataset, build_policy(vanilla)).towers


def build_policy(config: RunConfig, reference: Optional[ByolTowers] = None) -> SelectionPolicy:
    return SelectionPolicy(
        kind=config.policy.kind,
        reference_model=reference,
        k=config.train.k,
        rng_seed=config.policy.seed if config.policy.seed is not None else derive_seed(config.seed, "policy"),
        feature_space=config.policy.feature_space,
    )


def _checkpoint_path(out_dir: Path, name: str) -> Path:
    return out_dir / CHECKPOINT_DIR / f"{name}{CHECKPOINT_SUFFIX}"


def pretrain(config: RunConfig, dataset: Dataset, policy: SelectionPolicy,
             out_dir: Optional[Union[str, Path]] = None, towers: Optional[ByolTowers] = None) -> PretrainResult:
    """
    Train BYOL with additional positives chosen by ``policy``.

    With ``out_dir`` the per-step metrics CSV, optional selection dump and
    checkpoints (every ``io.checkpoint_every`` epochs plus ``final``) are
    written there. ``epochs = 0`` returns the initial towers untouched.
    """
    train = config.train
    size = len(dataset)
    if size == 0:
        raise ConfigError("dataset is empty", "dataset")
    if size < train.batch_size:
        raise ConfigError(f"dataset has {size} samples, fewer than batch_size {train.batch_size}",
                          "train.batch_size")
    if policy.k != train.k:
        raise ConfigError(f"policy k={policy.k} differs from train.k={train.k}", "train.k")

    per_epoch = steps_per_epoch(config, size)
    total_steps = train.epochs * per_epoch
    trainer = build_trainer(config, dataset.meta.dim, total_steps, towers)
    result = PretrainResult(towers=trainer.towers, trainer=trainer)

    out_path = Path(out_dir) if out_dir is not None else None
    metrics_log = MetricsLog(out_path / METRICS_FILE) if out_path is not None else None
    selection_dump = None
    if out_path is not None and config.io.dump_selections:
        selection_dump = SelectionDump(out_path / "selections.csv")

    if total_steps == 0:
        logger.info("No training steps configured; returning initial towers")
        if out_path is not None:
            result.final_checkpoint = save_checkpoint(_checkpoint_path(out_path, "final"), trainer.towers,
                                                      trainer.optimizer, 0, ema=trainer.ema)
        return result

    schedule = get_lr_schedule(train.lr_schedule)
    warmup_steps = min(train.warmup_epochs * per_epoch, total_steps)
    image_shape = dataset.meta.image_shape
    use_positives = policy.kind != PolicyKind.NONE

    for epoch in range(train.epochs):
        order = make_rng(config.seed, "shuffle", epoch).permutation(size)
        rows = []
        for b in range(per_epoch):
            step = trainer.step
            indices = order[b * train.batch_size:(b + 1) * train.batch_size]
            labels = dataset.labels[indices]
            views = make_views(dataset.samples[indices], config.augment, derive_seed(config.seed, "views", step),
                               labels=labels, image_shape=image_shape, indices=indices)
            lr = schedule(step, total_steps, train.base_lr, warmup_steps)

            positives = None
            tp = None
            if use_positives:
                # TracIn scores use the current learning rate as the step size.
                selection = select(policy, views, trainer.towers, step=step, eta=lr)
                positives = selection.positives
                tp = selection.tp_rate
                if selection_dump is not None:
                    selection_dump.append(step, positives, selection.scores, labels, indices)

            report = trainer.train_step(views, positives, train.lambda_, lr)
            rows.append({
                "epoch": epoch,
                "step": report.step,
                "loss_main": report.loss_main,
                "loss_additional": report.loss_additional,
                "loss_total": report.loss_total,
                "lr": report.lr,
                "tau": report.tau,
                "tp_rate": tp,
            })

        if metrics_log is not None:
            metrics_log.append(rows)
        tp_values = [row["tp_rate"] for row in rows if row["tp_rate"] is not None]
        metrics = EpochMetrics(
            epoch=epoch,
            steps=len(rows),
            loss_main=float(np.mean([row["loss_main"] for row in rows])),
            loss_additional=float(np.mean([row["loss_additional"] for row in rows])),
            loss_total=float(np.mean([row["loss_total"] for row in rows])),
            lr=rows[-1]["lr"],
            tau=rows[-1]["tau"],
            tp_rate=float(np.mean(tp_values)) if tp_values else None,
        )
        result.epochs.append(metrics)
        tp_text = "-" if metrics.tp_rate is None else f"{metrics.tp_rate:.3f}"
        logger.info(f"epoch {epoch + 1}/{train.epochs}: loss_main={metrics.loss_main:.4f} "
                    f"loss_additional={metrics.loss_additional:.4f} lr={metrics.lr:.5f} "
                    f"tau={metrics.tau:.5f} tp_rate={tp_text}")

        every = config.io.checkpoint_every
        if out_path is not None and every and (epoch + 1) % every == 0:
            save_checkpoint(_checkpoint_path(out_path, f"epoch_{epoch + 1:04d}"), trainer.towers,
                            trainer.optimizer, trainer.step, ema=trainer.ema)

    result.steps = trainer.step
    if out_path is not None:
        result.final_checkpoint = save_checkpoint(_checkpoint_path(out_path, "final"), trainer.towers,
                                                  trainer.optimizer, trainer.step, ema=trainer.ema)
    return result
