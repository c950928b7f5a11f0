"""
CSV outputs of training and evaluation runs.

- metrics log: one row per optimisation step, columns from settings.yaml
- selection dump: one row per (step, anchor, rank)
- tracin dump: the B x B score matrix plus the selected positives
- comparison report: CSV and an aligned plain-text table
"""

import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

import numpy as np
import pandas as pd

from config.env import get_metrics_columns, yaml_config

logger = logging.getLogger(__name__)

# Fixed float format keeps re-runs byte-identical.
FLOAT_FORMAT = "%.10g"

METRICS_FILE = yaml_config.get("metrics", {}).get("file", "metrics.csv")
SELECTION_COLUMNS = ["step", "anchor", "rank", "selected", "score", "same_label"]


class MetricsLog:
    """Append-only per-step metrics CSV. Opening truncates any previous run's file."""

    def __init__(self, path: Union[str, Path], columns: Optional[List[str]] = None):
        self.path = Path(path)
        self.columns = list(columns or get_metrics_columns())
        self.path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(columns=self.columns).to_csv(self.path, index=False)
        self.rows_written = 0

    def append(self, rows: Iterable[Dict[str, Any]]) -> None:
        frame = pd.DataFrame(list(rows), columns=self.columns)
        if frame.empty:
            return
        frame.to_csv(self.path, mode="a", header=False, index=False, float_format=FLOAT_FORMAT)
        self.rows_written += len(frame)


class SelectionDump:
    """Per-step record of which positive each anchor received."""

    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame(columns=SELECTION_COLUMNS).to_csv(self.path, index=False)

    def append(self, step: int, positives: np.ndarray, scores: Optional[np.ndarray] = None,
               labels: Optional[np.ndarray] = None, indices: Optional[np.ndarray] = None) -> None:
        selection_frame(step, positives, scores, labels, indices).to_csv(
            self.path, mode="a", header=False, index=False, float_format=FLOAT_FORMAT)


def selection_frame(step: int, positives: np.ndarray, scores: Optional[np.ndarray] = None,
                    labels: Optional[np.ndarray] = None, indices: Optional[np.ndarray] = None) -> pd.DataFrame:
    """
    Rows of (step, anchor, rank, selected, score, same_label). ``indices`` maps
    batch rows to dataset rows; without it batch-local indices are written.
    """
    positives = np.asarray(positives)
    if positives.ndim == 1:
        positives = positives[:, None]
    size, k = positives.shape
    anchors = np.repeat(np.arange(size), k)
    selected = positives.ravel()
    frame = pd.DataFrame({
        "step": step,
        "anchor": anchors if indices is None else np.asarray(indices)[anchors],
        "rank": np.tile(np.arange(k), size),
        "selected": selected if indices is None else np.asarray(indices)[selected],
        "score": np.nan if scores is None else np.asarray(scores)[anchors, selected],
        "same_label": pd.NA if labels is None else (np.asarray(labels)[anchors] == np.asarray(labels)[selected]),
    }, columns=SELECTION_COLUMNS)
    return frame


def write_tracin_dump(out_dir: Union[str, Path], scores: np.ndarray, positives: np.ndarray,
                      labels: Optional[np.ndarray] = None) -> Dict[str, Path]:
    """Write ``tracin_matrix.csv`` (row i = anchor i) and ``tracin_selections.csv``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    size = scores.shape[0]
    matrix_path = out_dir / "tracin_matrix.csv"
    matrix = pd.DataFrame(scores, columns=[f"s{j}" for j in range(size)])
    matrix.insert(0, "anchor", np.arange(size))
    matrix.to_csv(matrix_path, index=False, float_format=FLOAT_FORMAT)

    selections_path = out_dir / "tracin_selections.csv"
    selection_frame(0, positives, scores, labels).to_csv(selections_path, index=False, float_format=FLOAT_FORMAT)
    logger.info(f"Wrote TracIn dump for a batch of {size} to {out_dir}")
    return {"matrix": matrix_path, "selections": selections_path}


def write_table(frame: pd.DataFrame, out_dir: Union[str, Path], stem: str) -> Dict[str, Path]:
    """Write ``<stem>.csv`` and an aligned-column ``<stem>.txt``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / f"{stem}.csv"
    text_path = out_dir / f"{stem}.txt"
    frame.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT)
    text_path.write_text(format_table(frame) + "\n", encoding="utf-8")
    return {"csv": csv_path, "text": text_path}


def format_table(frame: pd.DataFrame) -> str:
    return frame.to_string(index=False, float_format=lambda value: f"{value:.4f}", na_rep="-")
