"""
Logging configuration for byol-tracin commands.
Console output plus an optional UTF-8 log file inside the command's out dir.
"""

import logging
import os
import sys
from typing import Optional, Union

from config.env import get_logging_config

_DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
_DEFAULT_DATEFMT = "%Y-%m-%d %H:%M:%S"


class LoggingConfig:
    """Root-logger setup shared by every CLI command."""

    @staticmethod
    def setup_logging(
        log_level: Union[int, str] = logging.INFO,
        log_file: Optional[str] = None,
        console_output: bool = True,
    ) -> None:
        """
        Configure the root logger.

        Args:
            log_level: Logging level name or number (default: INFO)
            log_file: Log file path; parent directory is created (default: no file)
            console_output: Enable stdout output (default: True)
        """
        if isinstance(log_level, str):
            log_level = logging.getLevelName(log_level.upper())
            if not isinstance(log_level, int):
                log_level = logging.INFO

        yaml_logging = get_logging_config()
        formatter = logging.Formatter(
            yaml_logging.get("format", _DEFAULT_FORMAT),
            datefmt=yaml_logging.get("datefmt", _DEFAULT_DATEFMT),
        )

        handlers = []

        if console_output:
            console_handler = logging.StreamHandler(sys.stdout)
            console_handler.setFormatter(formatter)
            console_handler.setLevel(log_level)
            handlers.append(console_handler)

        if log_file:
            log_dir = os.path.dirname(log_file) or "."
            os.makedirs(log_dir, exist_ok=True)

            file_handler = logging.FileHandler(log_file, encoding="utf-8")
            file_handler.setFormatter(formatter)
            file_handler.setLevel(log_level)
            handlers.append(file_handler)

        logging.basicConfig(level=log_level, handlers=handlers, force=True)

        for logger_name in ("engine", "tools", "config"):
            logging.getLogger(logger_name).setLevel(log_level)


def setup_run_logging(out_dir: str, log_level: Union[int, str] = logging.INFO) -> str:
    """Set up logging for a command whose outputs go to ``out_dir``; returns the log path."""
    yaml_logging = get_logging_config()
    log_path = os.path.join(out_dir, yaml_logging.get("log_dir", "logs"), yaml_logging.get("log_file", "run.log"))
    LoggingConfig.setup_logging(log_level=log_level, log_file=log_path, console_output=True)
    return log_path
