"""
Additional-positive selection over a mini-batch.

Every policy returns, for each anchor i, k indices j != i from the same
batch. Score-based policies (TracIn, feature similarity) take the k largest
off-diagonal entries of a B x B score row; ties go to the lowest index.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from engine.byol.batch import BatchViews
from engine.byol.towers import ByolTowers
from engine.errors import ConfigError, ContractError, DimensionError, NumericError
from engine.nn_core.tensor import Tensor
from engine.seeding import make_rng
from engine.selection.kinds import PolicyKind
from engine.tracin.kernel import TracInInputs, pairwise_tracin

logger = logging.getLogger(__name__)

FEATURE_SPACES = ("projector", "encoder")


@dataclass
class SelectionPolicy:
    kind: PolicyKind
    reference_model: Optional[ByolTowers] = None
    k: int = 1
    rng_seed: int = 0
    feature_space: str = "projector"

    def __post_init__(self):
        self.kind = PolicyKind(self.kind)
        if self.kind.needs_reference and self.reference_model is None:
            raise ConfigError(f"policy '{self.kind.value}' requires a reference model", "policy.reference_checkpoint")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}", "train.k")
        if self.feature_space not in FEATURE_SPACES:
            raise ConfigError(f"feature_space must be one of {FEATURE_SPACES}", "policy.feature_space")


@dataclass
class SelectionReport:
    positives: np.ndarray  # [B, k]
    score_source: PolicyKind
    tp_rate: Optional[float] = None
    scores: Optional[Tensor] = None
    fallback_anchors: List[int] = field(default_factory=list)

    def __post_init__(self):
        anchors = np.arange(self.positives.shape[0])[:, None]
        if (self.positives == anchors).any():
            raise ContractError("selection report contains a self-selected positive")

    @property
    def top1(self) -> np.ndarray:
        return self.positives[:, 0]


def masked_argmax(scores: Tensor, k: int = 1) -> np.ndarray:
    """Per row, indices of the k largest off-diagonal entries; ties go to the lowest index."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != scores.shape[1]:
        raise DimensionError(f"scores must be square, got {list(scores.shape)}")
    size = scores.shape[0]
    if not 1 <= k <= size - 1:
        raise ContractError(f"k must be in [1, {size - 1}] for a batch of {size}, got {k}")
    masked = scores.copy()
    np.fill_diagonal(masked, -np.inf)
    # Stable sort on the negated row keeps the lowest index first among ties.
    order = np.argsort(-masked, axis=1, kind="stable")
    return order[:, :k].astype(np.int64)


def tp_rate(positives: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of selected positives whose label equals the anchor's."""
    positives = np.asarray(positives)
    labels = np.asarray(labels)
    if positives.ndim == 1:
        positives = positives[:, None]
    if positives.shape[0] != labels.shape[0]:
        raise DimensionError(f"{positives.shape[0]} anchors but {labels.shape[0]} labels")
    return float(np.mean(labels[positives] == labels[:, None]))


def neighbor_precision(scores: Tensor, labels: np.ndarray, k: int) -> float:
    """Mean fraction of each anchor's top-k off-diagonal neighbours that share its label."""
    return tp_rate(masked_argmax(scores, k), labels)


def cosine_similarity_matrix(embeddings: Tensor) -> Tensor:
    norms = np.linalg.norm(embeddings, axis=1)
    bad = np.flatnonzero(norms <= 1e-12)
    if bad.size:
        raise NumericError("embedding norm below 1e-12", operand="embeddings", sample_index=int(bad[0]))
    unit = embeddings / norms[:, None]
    return unit @ unit.T


def tracin_inputs(model: ByolTowers, batch: BatchViews, eta: float) -> TracInInputs:
    """One forward pass per scoring view: q and a from view a, z from view b."""
    q = model.online_forward(batch.tracin_view_a, cache=True)
    a = model.online_predictor.last_linear_input
    model.clear_caches()
    z = model.target_forward(batch.tracin_view_b)
    return TracInInputs(logits_q=q, targets_z=z, activations_a=a, eta=eta)


def _uniform_others(rng: np.random.Generator, anchor: int, candidates: np.ndarray, k: int) -> np.ndarray:
    candidates = candidates[candidates != anchor]
    return rng.choice(candidates, size=k, replace=False)


def select(policy: SelectionPolicy, batch: BatchViews, model: ByolTowers, step: int = 0,
           eta: float = 1.0) -> SelectionReport:
    """
    Choose additional positives for every anchor of ``batch``.

    ``model`` is the current training model; *_PRETRAINED kinds score with the
    frozen reference model instead. Random draws come from a stream seeded by
    (policy seed, step), so repeated calls are reproducible.
    """
    size = batch.size
    if size < 2:
        raise ContractError(f"selection needs B >= 2, got {size}")
    if not 1 <= policy.k <= size - 1:
        raise ContractError(f"k={policy.k} must be < batch size {size}")
    kind = policy.kind
    scorer = policy.reference_model if kind.needs_reference else model
    scores = None
    fallback: List[int] = []

    if kind.uses_tracin:
        scores = pairwise_tracin(tracin_inputs(scorer, batch, eta)).scores
        positives = masked_argmax(scores, policy.k)
    elif kind.uses_features:
        if policy.feature_space == "encoder":
            embeddings = scorer.encode(batch.tracin_view_a)
        else:
            embeddings = scorer.online_project(batch.tracin_view_a)
        scores = cosine_similarity_matrix(embeddings)
        positives = masked_argmax(scores, policy.k)
    elif kind in (PolicyKind.RANDOM, PolicyKind.NONE):
        rng = make_rng(policy.rng_seed, "select", step)
        everyone = np.arange(size)
        positives = np.stack([_uniform_others(rng, i, everyone, policy.k) for i in range(size)])
    elif kind == PolicyKind.SUPERVISED_ORACLE:
        if batch.labels is None:
            raise ConfigError("supervised oracle needs labels", "policy.kind")
        rng = make_rng(policy.rng_seed, "select", step)
        everyone = np.arange(size)
        rows = []
        for i in range(size):
            same = np.flatnonzero(batch.labels == batch.labels[i])
            if same.size - 1 >= policy.k:
                rows.append(_uniform_others(rng, i, same, policy.k))
            else:
                fallback.append(i)
                rows.append(_uniform_others(rng, i, everyone, policy.k))
        positives = np.stack(rows)
        if fallback:
            logger.debug(f"supervised oracle fell back to random for anchors {fallback}")
    else:
        raise ConfigError(f"unsupported policy kind '{kind}'", "policy.kind")

    positives = np.asarray(positives, dtype=np.int64)
    rate = tp_rate(positives, batch.labels) if batch.labels is not None else None
    return SelectionReport(positives=positives, score_source=kind, tp_rate=rate, scores=scores,
                           fallback_anchors=fallback)
