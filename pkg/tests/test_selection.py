"""Additional-positive selection policies."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from engine.byol.batch import BatchViews
from engine.byol.towers import ByolTowers
from engine.errors import ConfigError, ContractError, DimensionError, NumericError
from engine.selection.kinds import PolicyKind
from engine.selection.policies import (
    SelectionPolicy,
    SelectionReport,
    cosine_similarity_matrix,
    masked_argmax,
    neighbor_precision,
    select,
    tp_rate,
)


def _batch(rng, size=6, dim=6, labels=None) -> BatchViews:
    x = rng.standard_normal((size, dim))
    return BatchViews(view_a=x, view_b=x, tracin_view_a=x, tracin_view_b=x + 0.01 * rng.standard_normal((size, dim)),
                      labels=labels)


class TestMaskedArgmax:
    def test_never_selects_diagonal(self):
        scores = np.diag([10.0, 10.0, 10.0]) + 1.0
        top = masked_argmax(scores, 1)
        assert np.all(top[:, 0] != np.arange(3))

    def test_ties_go_to_lowest_index(self):
        scores = np.ones((4, 4))
        assert_array_equal(masked_argmax(scores, 1)[:, 0], [1, 0, 0, 0])
        assert_array_equal(masked_argmax(scores, 2), [[1, 2], [0, 2], [0, 1], [0, 1]])

    def test_top_k_order(self):
        scores = np.array([[0.0, 1.0, 3.0, 2.0],
                           [1.0, 0.0, 0.5, 0.2],
                           [3.0, 0.5, 0.0, 4.0],
                           [2.0, 0.2, 4.0, 0.0]])
        assert_array_equal(masked_argmax(scores, 2), [[2, 3], [0, 2], [3, 0], [2, 0]])

    def test_invariant_under_increasing_transforms(self):
        scores = np.random.default_rng(9).standard_normal((7, 7))
        expected = masked_argmax(scores, 3)
        for transformed in (3.0 * scores + 1.0, np.exp(scores), np.arctan(scores)):
            assert_array_equal(masked_argmax(transformed, 3), expected)

    def test_k_must_be_below_batch(self):
        with pytest.raises(ContractError):
            masked_argmax(np.ones((3, 3)), 3)
        with pytest.raises(DimensionError):
            masked_argmax(np.ones((3, 2)), 1)


class TestRates:
    def test_tp_rate(self):
        labels = np.array([0, 0, 1, 1])
        assert tp_rate(np.array([1, 0, 3, 2]), labels) == 1.0
        assert tp_rate(np.array([2, 3, 0, 1]), labels) == 0.0
        assert tp_rate(np.array([[1, 2], [0, 3], [3, 0], [2, 1]]), labels) == 0.5

    def test_neighbor_precision(self):
        labels = np.array([0, 0, 1, 1])
        scores = np.array([[0.0, 0.9, 0.1, 0.2],
                           [0.9, 0.0, 0.3, 0.1],
                           [0.1, 0.3, 0.0, 0.8],
                           [0.2, 0.1, 0.8, 0.0]])
        assert neighbor_precision(scores, labels, 1) == 1.0
        assert neighbor_precision(scores, labels, 3) == pytest.approx(1.0 / 3.0)

    def test_cosine_similarity_zero_row(self):
        with pytest.raises(NumericError):
            cosine_similarity_matrix(np.array([[1.0, 0.0], [0.0, 0.0]]))


class TestPolicies:
    def test_pretrained_kind_requires_reference(self):
        with pytest.raises(ConfigError):
            SelectionPolicy(PolicyKind.TRACIN_PRETRAINED)
        with pytest.raises(ConfigError):
            SelectionPolicy(PolicyKind.FEATURE_SIM_PRETRAINED, reference_model=None)

    def test_report_rejects_self_selection(self):
        with pytest.raises(ContractError):
            SelectionReport(positives=np.array([[0], [0]]), score_source=PolicyKind.RANDOM)

    def test_feature_similarity_picks_duplicate(self, small_towers):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((5, 6))
        x = np.vstack([x, x[2]])
        batch = BatchViews(x, x, x, x)
        for space in ("projector", "encoder"):
            report = select(SelectionPolicy(PolicyKind.FEATURE_SIM, feature_space=space), batch, small_towers)
            assert report.top1[2] == 5
            assert report.top1[5] == 2

    def test_tracin_picks_duplicate_of_dominant_sample(self, small_towers):
        rng = np.random.default_rng(1)
        batch = _batch(rng, size=6)
        scores = select(SelectionPolicy(PolicyKind.TRACIN), batch, small_towers, eta=0.1).scores
        dominant = int(np.argmax(np.diag(scores)))
        duplicated = BatchViews(*(np.vstack([v, v[dominant]]) for v in
                                  (batch.view_a, batch.view_b, batch.tracin_view_a, batch.tracin_view_b)))
        report = select(SelectionPolicy(PolicyKind.TRACIN), duplicated, small_towers, eta=0.1)
        assert report.top1[dominant] == 6

    def test_tracin_selection_ignores_eta_scale(self, small_towers):
        batch = _batch(np.random.default_rng(10), size=8)
        policy = SelectionPolicy(PolicyKind.TRACIN, k=2)
        reference = select(policy, batch, small_towers, eta=0.05).positives
        for eta in (1e-4, 1.0, 37.0):
            assert_array_equal(select(policy, batch, small_towers, eta=eta).positives, reference)

    def test_pretrained_kinds_score_with_reference(self, small_towers, small_topology):
        reference = ByolTowers.initialize(small_topology, np.random.default_rng(99))
        batch = _batch(np.random.default_rng(2))
        on_the_fly = select(SelectionPolicy(PolicyKind.TRACIN), batch, small_towers, eta=0.1)
        pretrained = select(SelectionPolicy(PolicyKind.TRACIN_PRETRAINED, reference_model=reference), batch,
                            small_towers, eta=0.1)
        from_reference = select(SelectionPolicy(PolicyKind.TRACIN), batch, reference, eta=0.1)
        np.testing.assert_array_equal(pretrained.scores, from_reference.scores)
        assert not np.allclose(pretrained.scores, on_the_fly.scores)

    def test_random_is_reproducible_and_never_self(self, small_towers):
        batch = _batch(np.random.default_rng(3), size=8)
        policy = SelectionPolicy(PolicyKind.RANDOM, k=3, rng_seed=5)
        first = select(policy, batch, small_towers, step=4)
        second = select(policy, batch, small_towers, step=4)
        other_step = select(policy, batch, small_towers, step=5)
        assert_array_equal(first.positives, second.positives)
        assert not np.array_equal(first.positives, other_step.positives)
        assert first.positives.shape == (8, 3)
        for i, row in enumerate(first.positives):
            assert i not in row and len(set(row)) == 3

    def test_supervised_oracle_uses_labels(self, small_towers):
        labels = np.array([0, 0, 1, 1, 2, 2])
        batch = _batch(np.random.default_rng(4), labels=labels)
        report = select(SelectionPolicy(PolicyKind.SUPERVISED_ORACLE), batch, small_towers)
        assert report.tp_rate == 1.0
        assert report.fallback_anchors == []

    def test_supervised_oracle_singleton_falls_back(self, small_towers):
        labels = np.array([0, 0, 0, 1, 1, 2])
        batch = _batch(np.random.default_rng(5), labels=labels)
        report = select(SelectionPolicy(PolicyKind.SUPERVISED_ORACLE, rng_seed=1), batch, small_towers)
        assert report.fallback_anchors == [5]
        assert report.top1[5] != 5
        assert np.all(labels[report.top1[:5]] == labels[:5])

    def test_supervised_oracle_needs_labels(self, small_towers):
        with pytest.raises(ConfigError):
            select(SelectionPolicy(PolicyKind.SUPERVISED_ORACLE), _batch(np.random.default_rng(6)), small_towers)

    def test_k_not_below_batch(self, small_towers):
        batch = _batch(np.random.default_rng(7), size=3)
        with pytest.raises(ContractError):
            select(SelectionPolicy(PolicyKind.RANDOM, k=3), batch, small_towers)

    def test_tp_rate_reported_with_labels(self, small_towers):
        labels = np.array([0, 1, 0, 1, 0, 1])
        report = select(SelectionPolicy(PolicyKind.FEATURE_SIM), _batch(np.random.default_rng(8), labels=labels),
                        small_towers)
        assert report.tp_rate == tp_rate(report.positives, labels)
