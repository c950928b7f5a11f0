"""
Run configuration for byol-tracin experiments.

One TOML file per run with a block per concern (dataset, model, train,
augment, policy, io, eval, compare) plus a root seed. Unknown keys are
errors. ``resolve`` materializes every default and derived seed so the echoed
file reproduces the run exactly.
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import toml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from config.env import get_evaluation_config, settings
from engine.data.augment import AugmentConfig
from engine.errors import ConfigError
from engine.seeding import derive_seed
from engine.selection.kinds import PolicyKind

logger = logging.getLogger(__name__)

_EVAL_DEFAULTS = get_evaluation_config()


class _Block(BaseModel):
    model_config = ConfigDict(extra="forbid", populate_by_name=True, use_enum_values=False)


class DatasetBlock(_Block):
    """Where samples come from and how they are split."""
    source: Literal["blobs", "idx"] = "blobs"
    num_classes: int = Field(default=4, ge=1)
    per_class: int = Field(default=100, ge=1)
    dim: int = Field(default=32, ge=1)
    cluster_std: float = Field(default=1.0, ge=0.0)
    separation: float = Field(default=4.0, gt=0.0)
    images_path: Optional[str] = None
    labels_path: Optional[str] = None
    test_fraction: float = Field(default=0.2, gt=0.0, lt=1.0)
    seed: Optional[int] = None


class ModelBlock(_Block):
    encoder_widths: List[int] = Field(default_factory=lambda: [128, 64], min_length=1)
    hidden_dim: int = Field(default=64, ge=1)
    embedding_dim: int = Field(default=32, ge=1)
    activation: Literal["relu", "tanh"] = "relu"
    encoder_final_activation: bool = False


class TrainBlock(_Block):
    epochs: int = Field(default=20, ge=0)
    batch_size: int = Field(default=64)
    base_lr: float = Field(default=0.05, gt=0.0)
    warmup_epochs: int = Field(default=0, ge=0)
    lr_schedule: Literal["cosine", "constant"] = "cosine"
    momentum: float = Field(default=0.9, ge=0.0, lt=1.0)
    weight_decay: float = Field(default=1e-5, ge=0.0)
    tau_base: float = Field(default=0.99, ge=0.0, le=1.0)
    ema_mode: Literal["constant", "cosine"] = "cosine"
    lambda_: float = Field(default=1.0, ge=0.0, alias="lambda")
    k: int = Field(default=1, ge=1)
    symmetrize_additional: bool = True


class PolicyBlock(_Block):
    kind: PolicyKind = PolicyKind.TRACIN
    reference_checkpoint: Optional[str] = None
    seed: Optional[int] = None
    feature_space: Literal["projector", "encoder"] = "projector"


class IoBlock(_Block):
    out_dir: str = Field(default_factory=lambda: settings.DEFAULT_OUT_DIR)
    checkpoint_every: int = Field(default=0, ge=0)
    dump_selections: bool = False


class EvalBlock(_Block):
    probe_epochs: int = Field(default=int(_EVAL_DEFAULTS.get("probe_epochs", 200)), ge=0)
    probe_lr: float = Field(default=float(_EVAL_DEFAULTS.get("probe_lr", 0.5)), gt=0.0)
    knn_k: int = Field(default=int(_EVAL_DEFAULTS.get("knn_k", 10)), ge=1)
    label_fraction: float = Field(default=float(_EVAL_DEFAULTS.get("label_fraction", 1.0)), gt=0.0, le=1.0)


class PolicyEntry(_Block):
    """One row of a policy comparison."""
    name: str
    kind: PolicyKind
    lambda_: float = Field(default=1.0, ge=0.0, alias="lambda")


def _default_policies() -> List[PolicyEntry]:
    return [
        PolicyEntry(name="byol", kind=PolicyKind.NONE, lambda_=0.0),
        PolicyEntry(name="fs", kind=PolicyKind.FEATURE_SIM),
        PolicyEntry(name="fs_pretrained", kind=PolicyKind.FEATURE_SIM_PRETRAINED),
        PolicyEntry(name="byol_tracin", kind=PolicyKind.TRACIN),
        PolicyEntry(name="byol_tracin_pretrained", kind=PolicyKind.TRACIN_PRETRAINED),
        PolicyEntry(name="random", kind=PolicyKind.RANDOM),
        PolicyEntry(name="byol_sup", kind=PolicyKind.SUPERVISED_ORACLE),
    ]


class CompareBlock(_Block):
    policies: List[PolicyEntry] = Field(default_factory=_default_policies)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])


class RunConfig(_Block):
    seed: int = 0
    dataset: DatasetBlock = Field(default_factory=DatasetBlock)
    model: ModelBlock = Field(default_factory=ModelBlock)
    train: TrainBlock = Field(default_factory=TrainBlock)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    policy: PolicyBlock = Field(default_factory=PolicyBlock)
    io: IoBlock = Field(default_factory=IoBlock)
    eval: EvalBlock = Field(default_factory=EvalBlock)
    compare: CompareBlock = Field(default_factory=CompareBlock)

    @model_validator(mode="after")
    def _check_cross_fields(self) -> "RunConfig":
        if self.train.batch_size < 2:
            raise ValueError("train.batch_size must be >= 2")
        if not 1 <= self.train.k <= self.train.batch_size - 1:
            raise ValueError(f"train.k must be in [1, {self.train.batch_size - 1}]")
        if self.dataset.source == "idx" and not (self.dataset.images_path and self.dataset.labels_path):
            raise ValueError("dataset.images_path and dataset.labels_path are required for source 'idx'")
        names = [entry.name for entry in self.compare.policies]
        if len(set(names)) != len(names):
            raise ValueError("compare.policies names must be unique")
        return self

    def resolve(self) -> "RunConfig":
        """Copy with derived seeds filled in."""
        resolved = self.model_copy(deep=True)
        if resolved.dataset.seed is None:
            resolved.dataset.seed = derive_seed(self.seed, "dataset")
        if resolved.policy.seed is None:
            resolved.policy.seed = derive_seed(self.seed, "policy")
        return resolved

    def check_paths(self) -> None:
        """Every referenced input path must exist."""
        paths = {
            "dataset.images_path": self.dataset.images_path,
            "dataset.labels_path": self.dataset.labels_path,
            "policy.reference_checkpoint": self.policy.reference_checkpoint,
        }
        for field_name, value in paths.items():
            if value is not None and not Path(value).exists():
                raise ConfigError(f"{field_name}: path '{value}' does not exist", field_name)

    def to_dict(self) -> Dict[str, Any]:
        return self.model_dump(mode="json", by_alias=True, exclude_none=True)


def _format_validation_error(error: ValidationError) -> str:
    lines = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        lines.append(f"{location}: {item['msg']}")
    return "; ".join(lines)


def parse_run_config(data: Dict[str, Any], seed_override: Optional[int] = None,
                     out_override: Optional[str] = None) -> RunConfig:
    data = dict(data)
    if seed_override is not None:
        data["seed"] = seed_override
    if out_override is not None:
        data["io"] = {**data.get("io", {}), "out_dir": out_override}
    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]["loc"] if e.errors() else ()
        raise ConfigError(_format_validation_error(e), ".".join(str(p) for p in first) or None)
    return config.resolve()


def load_run_config(path: Union[str, Path], seed_override: Optional[int] = None,
                    out_override: Optional[str] = None, check_paths: bool = True) -> RunConfig:
    """Parse and validate a TOML run config; raises ConfigError with field-level messages."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file '{path}' does not exist", "config")
    try:
        data = toml.load(path)
    except toml.TomlDecodeError as e:
        raise ConfigError(f"cannot parse {path}: {e}", "config")
    config = parse_run_config(data, seed_override, out_override)
    if check_paths:
        config.check_paths()
    logger.debug(f"Loaded run config from {path}")
    return config


def dump_run_config(config: RunConfig, path: Union[str, Path]) -> Path:
    """Write the resolved config as TOML."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(toml.dumps(config.to_dict()), encoding="utf-8")
    return path
