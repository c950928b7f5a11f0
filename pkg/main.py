#!/usr/bin/env python3
"""
byol-tracin: BYOL pre-training with influence-guided additional positives.
Command-line entry point.

Subcommands:
- pretrain     train towers from a run config, write metrics and checkpoints
- eval         linear probe + kNN of a checkpoint's frozen encoder
- compare      multi-seed policy comparison table
- tracin-dump  B x B TracIn matrix and selected positives for one batch

Exit codes: 0 success, 2 invalid config / input files / topology mismatch,
1 runtime failure (including any failed comparison cell).
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

# Add project root to Python path
project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

from config.env import settings
from config.logging_config import LoggingConfig, setup_run_logging
from config.run_config import RunConfig, dump_run_config, load_run_config
from engine.byol.pretrain import build_policy, build_topology, pretrain, reference_model
from engine.data.sources import load_splits
from engine.data.views import make_views
from engine.errors import ByolTracinError, ConfigError, RunErrorHandler
from engine.evaluation.compare import compare_policies
from engine.evaluation.probes import knn_eval, linear_probe
from engine.seeding import derive_seed
from engine.selection.policies import masked_argmax, tracin_inputs
from engine.tracin.kernel import pairwise_tracin
from tools.checkpoint.checkpoint_store import load_checkpoint
from tools.reporting.csv_writers import format_table, write_table, write_tracin_dump

logger = logging.getLogger(__name__)

RESOLVED_CONFIG = "resolved_config.toml"


class ByolTracinCli:
    """Binds a parsed command line to the engine; every command returns an exit code."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.errors = RunErrorHandler()

    def load_config(self) -> RunConfig:
        config = load_run_config(self.args.config, seed_override=self.args.seed, out_override=self.args.out)
        out_dir = Path(config.io.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        log_path = setup_run_logging(str(out_dir), self.args.log_level)
        dump_run_config(config, out_dir / RESOLVED_CONFIG)
        logger.info(f"{settings.APP_NAME} {settings.APP_VERSION}: {self.args.command} -> {out_dir} (log: {log_path})")
        return config

    def cmd_pretrain(self) -> int:
        config = self.load_config()
        train, _ = load_splits(config.dataset)
        reference = reference_model(config, train) if config.policy.kind.needs_reference else None
        result = pretrain(config, train, build_policy(config, reference), out_dir=config.io.out_dir)
        logger.info(f"Pre-training finished after {result.steps} steps; final checkpoint {result.final_checkpoint}")
        return 0

    def cmd_eval(self) -> int:
        config = self.load_config()
        train, test = load_splits(config.dataset)
        checkpoint = load_checkpoint(self.checkpoint_path(), expected=build_topology(config, train.meta.dim))
        encoder = checkpoint.towers.online_encoder
        probe = linear_probe(encoder, train, test, config.eval.probe_epochs, config.eval.probe_lr,
                             config.eval.label_fraction, derive_seed(config.seed, "probe"))
        knn = knn_eval(encoder, train, test, min(config.eval.knn_k, len(train)))
        frame = pd.DataFrame([{
            "checkpoint": str(self.args.checkpoint),
            "step": checkpoint.step,
            "probe_accuracy": probe.accuracy,
            "knn_accuracy": knn,
            "warnings": "; ".join(probe.warnings),
        }])
        write_table(frame, config.io.out_dir, "eval")
        print(format_table(frame))
        return 0

    def cmd_compare(self) -> int:
        config = self.load_config()
        result = compare_policies(config, out_dir=config.io.out_dir)
        write_table(result.table(), config.io.out_dir, "report")
        write_table(result.cell_table(), config.io.out_dir, "cells")
        print(format_table(result.table()))
        if result.any_failed:
            for context in result.errors.error_history:
                logger.error(f"failed cell: policy={context.policy} seed={context.seed}: {context.message}")
            return 1
        return 0

    def cmd_tracin_dump(self) -> int:
        config = self.load_config()
        train, _ = load_splits(config.dataset)
        checkpoint = load_checkpoint(self.checkpoint_path(), expected=build_topology(config, train.meta.dim))
        rows = self.batch_rows(len(train), config.train.batch_size)
        views = make_views(train.samples[rows], config.augment, derive_seed(config.seed, "tracin_dump"),
                           labels=train.labels[rows], image_shape=train.meta.image_shape, indices=rows)
        matrix = pairwise_tracin(tracin_inputs(checkpoint.towers, views, config.train.base_lr))
        k = min(config.train.k, len(rows) - 1)
        positives = masked_argmax(matrix.scores, k)
        write_tracin_dump(config.io.out_dir, matrix.scores, positives, views.labels)
        return 0

    def checkpoint_path(self) -> Path:
        if not self.args.checkpoint:
            raise ConfigError(f"'{self.args.command}' needs --checkpoint", "checkpoint")
        path = Path(self.args.checkpoint)
        if not path.exists():
            raise FileNotFoundError(f"checkpoint '{path}' does not exist")
        return path

    def batch_rows(self, dataset_size: int, default_size: int) -> np.ndarray:
        """Training-split rows of the dumped batch: ``--rows`` or the first ``--batch-size`` rows."""
        if self.args.rows:
            try:
                rows = np.array([int(part) for part in self.args.rows.split(",") if part.strip()], dtype=np.int64)
            except ValueError:
                raise ConfigError(f"--rows must be comma-separated integers, got '{self.args.rows}'", "rows")
        else:
            size = self.args.batch_size or default_size
            rows = np.arange(min(size, dataset_size), dtype=np.int64)
        if rows.size < 2:
            raise ConfigError("a TracIn batch needs at least 2 rows", "rows")
        if rows.min() < 0 or rows.max() >= dataset_size:
            raise ConfigError(f"rows must lie in [0, {dataset_size})", "rows")
        return rows

    def run(self) -> int:
        commands = {
            "pretrain": self.cmd_pretrain,
            "eval": self.cmd_eval,
            "compare": self.cmd_compare,
            "tracin-dump": self.cmd_tracin_dump,
        }
        try:
            return commands[self.args.command]()
        except (ByolTracinError, FileNotFoundError) as e:
            self.errors.handle(e, self.args.command)
            print(f"error: {e}", file=sys.stderr)
            return RunErrorHandler.exit_code(e)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="byol-tracin", description="BYOL with TracIn-selected additional positives")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_common(sub: argparse.ArgumentParser) -> None:
        sub.add_argument("--config", required=True, help="TOML run config")
        sub.add_argument("--out", default=None, help="output directory (overrides io.out_dir)")
        sub.add_argument("--seed", type=int, default=None, help="root seed override")
        sub.add_argument("--log-level", default=settings.LOG_LEVEL, help="logging level")

    add_common(subparsers.add_parser("pretrain", help="pre-train BYOL towers"))
    add_common(subparsers.add_parser("compare", help="compare selection policies over seeds"))

    eval_parser = subparsers.add_parser("eval", help="probe a checkpoint's frozen encoder")
    add_common(eval_parser)
    eval_parser.add_argument("--checkpoint", required=True)

    dump_parser = subparsers.add_parser("tracin-dump", help="dump the TracIn matrix of one batch")
    add_common(dump_parser)
    dump_parser.add_argument("--checkpoint", required=True)
    dump_parser.add_argument("--rows", default=None, help="comma-separated training-split row indices")
    dump_parser.add_argument("--batch-size", type=int, default=None, help="use the first N training rows")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    LoggingConfig.setup_logging(log_level=args.log_level, console_output=True)
    return ByolTracinCli(args).run()


if __name__ == "__main__":
    sys.exit(main())
