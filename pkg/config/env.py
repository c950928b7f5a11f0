"""
Environment configuration module for byol-tracin.
Loads process settings from environment variables and application defaults
from YAML configuration.
"""

import logging
from pathlib import Path
from typing import Any, Dict, Optional

import yaml
from pydantic import Field
from pydantic_settings import BaseSettings

logger = logging.getLogger(__name__)


class Settings(BaseSettings):
    """Process-level settings loaded from environment variables and .env."""

    model_config = {
        "extra": "ignore",
        "env_file": ".env",
        "env_file_encoding": "utf-8",
        "case_sensitive": True,
    }

    # Application Settings
    APP_NAME: str = Field(default="byol-tracin")
    APP_VERSION: str = Field(default="1.0.0")

    # Numerics
    CHECKED_MODE: bool = Field(default=True)

    # Logging
    LOG_LEVEL: str = Field(default="INFO")

    # Output
    DEFAULT_OUT_DIR: str = Field(default="./runs/default")

    def load_yaml_config(self, config_path: Optional[str] = None) -> Dict[str, Any]:
        """Load application defaults from YAML file."""
        if config_path is None:
            config_path = Path(__file__).parent / "settings.yaml"

        try:
            with open(config_path, "r", encoding="utf-8") as file:
                return yaml.safe_load(file) or {}
        except FileNotFoundError:
            return {}
        except yaml.YAMLError as e:
            logger.error(f"Error loading YAML config: {e}")
            return {}


# Create global settings instance
settings = Settings()

# Load YAML configuration
yaml_config = settings.load_yaml_config()


def get_logging_config() -> Dict[str, Any]:
    """Get logging configuration."""
    return yaml_config.get("logging", {})


def get_checkpoint_config() -> Dict[str, Any]:
    """Get checkpoint container configuration."""
    return yaml_config.get("checkpoint", {})


def get_evaluation_config() -> Dict[str, Any]:
    """Get default evaluation parameters."""
    return yaml_config.get("evaluation", {})


def get_metrics_columns() -> list:
    """Column order of the per-step metrics log."""
    return yaml_config.get("metrics", {}).get(
        "columns", ["epoch", "step", "loss_main", "loss_additional", "lr", "tau", "tp_rate"]
    )
