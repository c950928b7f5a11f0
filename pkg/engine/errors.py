"""
Error types and run-level error handling.

Every failure the engine can raise derives from ``ByolTracinError`` so callers
(the CLI, the comparison harness) can classify it by severity and map it to an
exit code without string matching.
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

logger = logging.getLogger(__name__)


class ByolTracinError(Exception):
    """Base class for all engine errors."""


class ConfigError(ByolTracinError):
    """Invalid configuration or precondition, detected before work starts."""

    def __init__(self, message: str, field_name: Optional[str] = None):
        super().__init__(message)
        self.field_name = field_name


class DimensionError(ByolTracinError):
    """Tensor shape does not match what a layer expects."""

    def __init__(self, message: str, layer_index: Optional[int] = None):
        if layer_index is not None:
            message = f"layer {layer_index}: {message}"
        super().__init__(message)
        self.layer_index = layer_index


class NumericError(ByolTracinError):
    """Non-finite values or degenerate norms."""

    def __init__(self, message: str, operand: Optional[str] = None, sample_index: Optional[int] = None):
        prefix = []
        if operand is not None:
            prefix.append(f"operand '{operand}'")
        if sample_index is not None:
            prefix.append(f"sample {sample_index}")
        if prefix:
            message = f"{', '.join(prefix)}: {message}"
        super().__init__(message)
        self.operand = operand
        self.sample_index = sample_index


class StateError(ByolTracinError):
    """Operation called in the wrong lifecycle state (e.g. backward before forward)."""


class ContractError(ByolTracinError):
    """Caller broke an operation contract (self-index positives, k >= B, ...)."""


class FormatError(ByolTracinError):
    """Malformed input file."""

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class TopologyMismatchError(ByolTracinError):
    """Checkpoint topology hash differs from the requested model topology."""

    def __init__(self, expected: str, found: str):
        super().__init__(f"checkpoint/model topology mismatch: expected {expected}, found {found}")
        self.expected = expected
        self.found = found


class ErrorSeverity(Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"
    CRITICAL = "critical"


@dataclass
class ErrorContext:
    """Where an error happened, for logging and report cells."""
    stage: str
    policy: Optional[str]
    seed: Optional[int]
    timestamp: float
    severity: ErrorSeverity
    error_type: str = ""
    message: str = ""


# Errors the user fixes by editing inputs; the CLI reports these with exit code 2.
_USAGE_ERRORS = (ConfigError, FormatError, TopologyMismatchError, FileNotFoundError)


@dataclass
class RunErrorHandler:
    """Classifies, logs and records failures of pipeline stages."""

    error_history: List[ErrorContext] = field(default_factory=list)

    def classify(self, error: BaseException) -> ErrorSeverity:
        if isinstance(error, _USAGE_ERRORS):
            return ErrorSeverity.MEDIUM
        if isinstance(error, (NumericError, DimensionError)):
            return ErrorSeverity.HIGH
        if isinstance(error, (StateError, ContractError)):
            return ErrorSeverity.CRITICAL
        return ErrorSeverity.HIGH

    @staticmethod
    def exit_code(error: BaseException) -> int:
        return 2 if isinstance(error, _USAGE_ERRORS) else 1

    def handle(self, error: BaseException, stage: str,
               policy: Optional[str] = None, seed: Optional[int] = None) -> ErrorContext:
        """Log the error with its context and append it to the history."""
        context = ErrorContext(
            stage=stage,
            policy=policy,
            seed=seed,
            timestamp=time.time(),
            severity=self.classify(error),
            error_type=type(error).__name__,
            message=str(error),
        )
        where = stage if policy is None else f"{stage} [policy={policy}, seed={seed}]"
        # Engine errors carry their own message; anything else gets a traceback.
        exc_info = None if isinstance(error, _USAGE_ERRORS + (ByolTracinError,)) else error
        if context.severity == ErrorSeverity.CRITICAL:
            logger.critical(f"{where}: {context.error_type}: {error}", exc_info=exc_info)
        elif context.severity == ErrorSeverity.HIGH:
            logger.error(f"{where}: {context.error_type}: {error}", exc_info=exc_info)
        else:
            logger.warning(f"{where}: {context.error_type}: {error}", exc_info=exc_info)
        self.error_history.append(context)
        return context
