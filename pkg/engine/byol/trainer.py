"""
One optimisation step of BYOL with an optional additional positive per anchor.

Both views are anchors: rows of view_a regress onto the target embedding of
view_b and vice versa. The additional positive of anchor i is the target
embedding of sample ``positives[i]`` taken from the opposite view.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from engine.byol.batch import BatchViews
from engine.byol.ema import EmaSchedule, ema_update
from engine.byol.loss import byol_loss_grad_rows, byol_loss_rows
from engine.byol.towers import ByolTowers
from engine.errors import ContractError
from engine.nn_core.optim import SgdState, sgd_step

logger = logging.getLogger(__name__)


@dataclass
class StepReport:
    step: int
    loss_main: float
    loss_additional: float
    loss_total: float
    lr: float
    tau: float


def normalize_positives(positives: Optional[np.ndarray], batch_size: int) -> Optional[np.ndarray]:
    """Validate positives and return them as an int array of shape [B, k]."""
    if positives is None:
        return None
    positives = np.asarray(positives)
    if positives.ndim == 1:
        positives = positives[:, None]
    if positives.ndim != 2 or positives.shape[0] != batch_size or positives.shape[1] < 1:
        raise ContractError(f"positives must have shape [{batch_size}] or [{batch_size}, k], got {list(positives.shape)}")
    if not np.issubdtype(positives.dtype, np.integer):
        raise ContractError("positives must be integer indices")
    if positives.min() < 0 or positives.max() >= batch_size:
        raise ContractError(f"positive indices must lie in [0, {batch_size})")
    anchors = np.arange(batch_size)[:, None]
    clash = np.flatnonzero((positives == anchors).any(axis=1))
    if clash.size:
        raise ContractError(f"anchor {int(clash[0])} selected itself as additional positive")
    return positives.astype(np.int64)


class ByolTrainer:
    """Owns the towers, optimizer state and EMA schedule; ``step`` counts completed updates."""

    def __init__(self, towers: ByolTowers, optimizer: SgdState, ema: EmaSchedule,
                 symmetrize_additional: bool = True):
        self.towers = towers
        self.optimizer = optimizer
        self.ema = ema
        self.symmetrize_additional = symmetrize_additional
        self.step = 0

    def train_step(self, batch: BatchViews, positives: Optional[np.ndarray], lam: float, lr: float) -> StepReport:
        size = batch.size
        if size < 2:
            raise ContractError(f"batch size must be >= 2, got {size}")
        if lam < 0.0:
            raise ContractError(f"lambda must be >= 0, got {lam}")
        positives = normalize_positives(positives, size)

        towers = self.towers
        q = towers.online_forward(np.concatenate([batch.view_a, batch.view_b]))
        z = towers.target_forward(np.concatenate([batch.view_b, batch.view_a]))

        loss_main = float(np.mean(byol_loss_rows(q, z)))
        grad_q = byol_loss_grad_rows(q, z)

        loss_additional = 0.0
        if positives is not None:
            k = positives.shape[1]
            # Row r of the first half is view_a anchor r; its opposite-view targets sit in z[:size].
            partner_rows = np.concatenate([positives, positives + size])
            if self.symmetrize_additional:
                weights = np.ones(2 * size)
            else:
                weights = np.concatenate([np.full(size, 2.0), np.zeros(size)])
            additional = np.zeros(2 * size)
            grad_additional = np.zeros_like(q)
            for j in range(k):
                z_partner = z[partner_rows[:, j]]
                additional += byol_loss_rows(q, z_partner) / k
                grad_additional += byol_loss_grad_rows(q, z_partner) / k
            loss_additional = float(np.mean(weights * additional))
            if lam != 0.0:
                grad_q = grad_q + lam * weights[:, None] * grad_additional

        grads = towers.online_backward(grad_q)
        sgd_step(towers.online_parameters(), grads, self.optimizer, lr)

        tau = self.ema.tau(self.step)
        ema_update(towers, tau)

        report = StepReport(
            step=self.step,
            loss_main=loss_main,
            loss_additional=loss_additional,
            loss_total=loss_main + lam * loss_additional,
            lr=lr,
            tau=tau,
        )
        self.step += 1
        logger.debug(f"step {report.step}: loss_main={loss_main:.6f} loss_additional={loss_additional:.6f}")
        return report
