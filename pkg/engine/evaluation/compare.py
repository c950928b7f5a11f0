"""
Policy comparison harness.

For every (policy, seed) cell: build the seed's dataset split, pre-train with
the policy, then score the frozen online encoder with a linear probe and kNN.
A random-encoder row (initial weights, no training) is always included.
Cells run sequentially in sorted seed order; a failing cell is recorded and
reported instead of aborting the comparison.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
import pandas as pd

from config.run_config import PolicyEntry, RunConfig
from engine.byol.pretrain import build_policy, initial_towers, pretrain, reference_model
from engine.byol.towers import ByolTowers
from engine.data.dataset import Dataset
from engine.data.sources import load_splits
from engine.errors import ConfigError, RunErrorHandler
from engine.evaluation.probes import knn_eval, linear_probe
from engine.seeding import derive_seed

logger = logging.getLogger(__name__)

RANDOM_ENCODER = "random_encoder"


@dataclass
class CellResult:
    policy: str
    kind: str
    seed: int
    probe_accuracy: float = float("nan")
    knn_accuracy: float = float("nan")
    tp_rate_curve: List[float] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)
    failed: bool = False
    error: str = ""

    @property
    def final_tp_rate(self) -> float:
        return self.tp_rate_curve[-1] if self.tp_rate_curve else float("nan")


@dataclass
class EvalReport:
    """One row of the comparison table: all seeds of one policy."""
    policy: str
    kind: str
    seeds: List[int]
    probe_accuracy: List[float]
    knn_accuracy: List[float]
    tp_rate_curves: List[List[float]]
    failed_seeds: List[int] = field(default_factory=list)

    def _stats(self, values: Sequence[float]):
        values = np.asarray([v for v in values if not np.isnan(v)], dtype=np.float64)
        if values.size == 0:
            return float("nan"), float("nan")
        return float(values.mean()), (float(values.std(ddof=1)) if values.size > 1 else 0.0)

    @property
    def probe_mean(self) -> float:
        return self._stats(self.probe_accuracy)[0]

    @property
    def probe_std(self) -> float:
        return self._stats(self.probe_accuracy)[1]

    @property
    def knn_mean(self) -> float:
        return self._stats(self.knn_accuracy)[0]

    @property
    def knn_std(self) -> float:
        return self._stats(self.knn_accuracy)[1]

    @property
    def tp_rate_mean(self) -> float:
        return self._stats([c[-1] if c else float("nan") for c in self.tp_rate_curves])[0]

    @property
    def tp_rate_std(self) -> float:
        return self._stats([c[-1] if c else float("nan") for c in self.tp_rate_curves])[1]


@dataclass
class ComparisonResult:
    reports: List[EvalReport]
    cells: List[CellResult]
    errors: RunErrorHandler

    @property
    def any_failed(self) -> bool:
        return any(cell.failed for cell in self.cells)

    def report(self, name: str) -> EvalReport:
        for report in self.reports:
            if report.policy == name:
                return report
        raise KeyError(name)

    def table(self) -> pd.DataFrame:
        return pd.DataFrame([{
            "policy": r.policy,
            "kind": r.kind,
            "n_seeds": len(r.seeds) - len(r.failed_seeds),
            "probe_mean": r.probe_mean,
            "probe_std": r.probe_std,
            "knn_mean": r.knn_mean,
            "knn_std": r.knn_std,
            "tp_rate_mean": r.tp_rate_mean,
            "tp_rate_std": r.tp_rate_std,
            "failed_seeds": " ".join(str(s) for s in r.failed_seeds),
        } for r in self.reports])

    def cell_table(self) -> pd.DataFrame:
        return pd.DataFrame([{
            "policy": c.policy,
            "seed": c.seed,
            "probe_accuracy": c.probe_accuracy,
            "knn_accuracy": c.knn_accuracy,
            "final_tp_rate": c.final_tp_rate,
            "tp_rate_curve": " ".join(f"{v:.6f}" for v in c.tp_rate_curve),
            "status": "failed" if c.failed else "ok",
            "error": c.error,
        } for c in self.cells])


def seeded_config(config: RunConfig, seed: int) -> RunConfig:
    """Copy of ``config`` for one comparison seed, with its derived seeds."""
    seeded = config.model_copy(deep=True)
    seeded.seed = seed
    seeded.dataset.seed = derive_seed(seed, "dataset")
    seeded.policy.seed = derive_seed(seed, "policy")
    return seeded


def policy_config(config: RunConfig, entry: PolicyEntry) -> RunConfig:
    cell = config.model_copy(deep=True)
    cell.policy.kind = entry.kind
    cell.train.lambda_ = entry.lambda_
    return cell


def _evaluate(cell: CellResult, towers: ByolTowers, config: RunConfig, train: Dataset, test: Dataset) -> None:
    probe = linear_probe(towers.online_encoder, train, test, config.eval.probe_epochs, config.eval.probe_lr,
                         config.eval.label_fraction, derive_seed(config.seed, "probe"))
    cell.probe_accuracy = probe.accuracy
    cell.warnings.extend(probe.warnings)
    cell.knn_accuracy = knn_eval(towers.online_encoder, train, test, min(config.eval.knn_k, len(train)))


def validate_comparison(policies: Sequence[PolicyEntry], seeds: Sequence[int]) -> List[int]:
    if len(policies) < 2:
        raise ConfigError(f"comparison needs at least 2 policies, got {len(policies)}", "compare.policies")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("comparison seeds must differ", "compare.seeds")
    if len(seeds) < 3:
        raise ConfigError(f"comparison needs at least 3 seeds, got {len(seeds)}", "compare.seeds")
    names = [p.name for p in policies]
    if RANDOM_ENCODER in names or len(set(names)) != len(names):
        raise ConfigError("policy names must be unique and not 'random_encoder'", "compare.policies")
    return sorted(int(s) for s in seeds)


def compare_policies(config: RunConfig, policies: Optional[Sequence[PolicyEntry]] = None,
                     seeds: Optional[Sequence[int]] = None,
                     out_dir: Optional[Union[str, Path]] = None) -> ComparisonResult:
    """
    Run every (policy, seed) cell and aggregate mean/std per policy.

    *_PRETRAINED policies score with a vanilla BYOL model trained on the same
    seed and split (or the configured reference checkpoint); it is trained once
    per seed and shared by those policies.
    """
    policies = list(policies if policies is not None else config.compare.policies)
    seeds = validate_comparison(policies, list(seeds if seeds is not None else config.compare.seeds))
    errors = RunErrorHandler()
    cells: List[CellResult] = []

    for seed in seeds:
        base = seeded_config(config, seed)
        reference: Dict[str, ByolTowers] = {}

        try:
            train, test = load_splits(base.dataset)
        except Exception as e:
            # Without data no cell of this seed can run.
            context = errors.handle(e, "compare", "*", seed)
            cells.append(CellResult(policy=RANDOM_ENCODER, kind=RANDOM_ENCODER, seed=seed, failed=True,
                                    error=context.message))
            cells.extend(CellResult(policy=entry.name, kind=entry.kind.value, seed=seed, failed=True,
                                    error=context.message) for entry in policies)
            continue

        cell = CellResult(policy=RANDOM_ENCODER, kind=RANDOM_ENCODER, seed=seed)
        try:
            _evaluate(cell, initial_towers(base, train.meta.dim), base, train, test)
        except Exception as e:
            context = errors.handle(e, "compare", RANDOM_ENCODER, seed)
            cell.failed, cell.error = True, context.message
        cells.append(cell)

        for entry in policies:
            cell = CellResult(policy=entry.name, kind=entry.kind.value, seed=seed)
            cfg = policy_config(base, entry)
            try:
                ref = None
                if entry.kind.needs_reference:
                    if "model" not in reference:
                        reference["model"] = reference_model(cfg, train)
                    ref = reference["model"]
                cell_dir = Path(out_dir) / "cells" / f"{entry.name}_seed{seed}" if out_dir is not None else None
                result = pretrain(cfg, train, build_policy(cfg, ref), out_dir=cell_dir)
                cell.tp_rate_curve = result.tp_rate_curve
                _evaluate(cell, result.towers, cfg, train, test)
                logger.info(f"[{entry.name} seed={seed}] probe={cell.probe_accuracy:.4f} "
                            f"knn={cell.knn_accuracy:.4f} tp_rate={cell.final_tp_rate:.4f}")
            except Exception as e:
                context = errors.handle(e, "compare", entry.name, seed)
                cell.failed, cell.error = True, context.message
            cells.append(cell)

    names = [RANDOM_ENCODER] + [p.name for p in policies]
    reports = []
    for name in names:
        rows = [c for c in cells if c.policy == name]
        ok = [c for c in rows if not c.failed]
        reports.append(EvalReport(
            policy=name,
            kind=rows[0].kind,
            seeds=[c.seed for c in rows],
            probe_accuracy=[c.probe_accuracy for c in ok],
            knn_accuracy=[c.knn_accuracy for c in ok],
            tp_rate_curves=[c.tp_rate_curve for c in ok],
            failed_seeds=[c.seed for c in rows if c.failed],
        ))
    if errors.error_history:
        logger.warning(f"comparison finished with {len(errors.error_history)} failed cell(s)")
    return ComparisonResult(reports=reports, cells=cells, errors=errors)
