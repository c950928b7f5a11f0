"""
Batch-wise TracIn on the last linear layer of the online predictor.

For the BYOL loss f(q) with q = W a + b, the weight gradient of one sample is
the outer product grad_q f(q) a^T. The Frobenius inner product of two such
outer products factors as (grad_q f(q_i) . grad_q f(q_k)) (a_i . a_k), so the
whole B x B influence matrix is the elementwise product of two Gram matrices
and needs no backward pass. Bias gradients are not part of the score.
"""

import logging
from dataclasses import dataclass, replace

import numpy as np

from engine.byol.loss import NORM_EPS, byol_loss_grad_rows
from engine.errors import ContractError, DimensionError, NumericError
from engine.nn_core.tensor import Tensor, as_tensor

logger = logging.getLogger(__name__)


@dataclass
class TracInInputs:
    """Logits q and last-layer inputs a of the scored model, targets z, and step size eta."""
    logits_q: Tensor
    targets_z: Tensor
    activations_a: Tensor
    eta: float = 1.0

    def __post_init__(self):
        self.logits_q = as_tensor(self.logits_q, name="logits_q")
        self.targets_z = as_tensor(self.targets_z, name="targets_z")
        self.activations_a = as_tensor(self.activations_a, name="activations_a")
        if self.logits_q.ndim != 2 or self.logits_q.shape != self.targets_z.shape:
            raise DimensionError(f"logits {list(self.logits_q.shape)} and targets {list(self.targets_z.shape)} must both be [B, n]")
        if self.activations_a.ndim != 2 or self.activations_a.shape[0] != self.logits_q.shape[0]:
            raise DimensionError(f"activations must be [B, m] with B={self.logits_q.shape[0]}, got {list(self.activations_a.shape)}")
        if self.size < 2:
            raise ContractError(f"TracIn needs B >= 2, got {self.size}")
        if self.eta < 0.0:
            raise ContractError(f"eta must be >= 0, got {self.eta}")
        for name, rows in (("logits_q", self.logits_q), ("targets_z", self.targets_z)):
            norms = np.linalg.norm(rows, axis=1)
            bad = np.flatnonzero(norms <= NORM_EPS)
            if bad.size:
                raise NumericError(f"row norm below {NORM_EPS:g}", operand=name, sample_index=int(bad[0]))

    @property
    def size(self) -> int:
        return self.logits_q.shape[0]

    def logit_gradients(self) -> Tensor:
        return byol_loss_grad_rows(self.logits_q, self.targets_z)


@dataclass
class TracInMatrix:
    scores: Tensor
    eta: float
    self_masked: bool = False

    def masked(self) -> "TracInMatrix":
        """Copy with the diagonal set to -inf so a sample never selects itself."""
        scores = self.scores.copy()
        np.fill_diagonal(scores, -np.inf)
        return replace(self, scores=scores, self_masked=True)


def grad_logits(q: Tensor, z: Tensor) -> Tensor:
    """Analytic gradient of the BYOL loss with respect to the logits q (1-D)."""
    q = np.asarray(q, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    return byol_loss_grad_rows(q[None, :], z[None, :])[0]


def per_sample_last_layer_grad(inputs: TracInInputs, i: int) -> Tensor:
    """Materialized weight gradient grad_q f(q_i) a_i^T of shape [n, m]; diagnostics only."""
    if not 0 <= i < inputs.size:
        raise ContractError(f"sample index {i} out of range [0, {inputs.size})")
    return np.outer(grad_logits(inputs.logits_q[i], inputs.targets_z[i]), inputs.activations_a[i])


def pairwise_tracin(inputs: TracInInputs) -> TracInMatrix:
    """scores[i, k] = eta * (g_i . g_k) * (a_i . a_k) from two Gram matrices."""
    gradients = inputs.logit_gradients()
    gradient_gram = gradients @ gradients.T
    activation_gram = inputs.activations_a @ inputs.activations_a.T
    scores = inputs.eta * gradient_gram * activation_gram
    scores = 0.5 * (scores + scores.T)
    return TracInMatrix(scores=scores, eta=inputs.eta, self_masked=False)
