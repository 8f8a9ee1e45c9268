"""
Configuration settings for ExpoMask.
"""

from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from dotenv import dotenv_values, load_dotenv
from pydantic_settings import BaseSettings, SettingsConfigDict

from expomask.errors import InvalidParams
from expomask.models.training import TrainConfig

# Load environment variables
load_dotenv()

# Base directory
BASE_DIR = Path(__file__).resolve().parent.parent


class Settings(BaseSettings):
    """Application settings."""

    model_config = SettingsConfigDict(
        env_prefix="EXPOMASK_",
        env_file=".env",
        extra="ignore",
        protected_namespaces=(),
    )

    # Data
    data_dir: Path = BASE_DIR / "data"
    model_path: Optional[Path] = None
    default_train_config: Optional[Path] = None

    # Logging
    log_level: str = "INFO"
    debug: bool = False

    # Server
    host: str = "0.0.0.0"
    port: int = 7777


# Global settings instance
settings = Settings()


def read_config_file(path: Path) -> Dict[str, str]:
    """
    Read a flat key=value training config file.

    Args:
        path: Path to the file. Blank lines and `#` comments are ignored.

    Returns:
        Dict of raw string values keyed by TrainConfig field name.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")

    values = {key.strip().lower(): value for key, value in dotenv_values(path).items()}
    unknown = sorted(set(values) - set(TrainConfig.model_fields))
    if unknown:
        raise InvalidParams(f"Unknown config keys in {path}: {', '.join(unknown)}")
    missing = sorted(key for key, value in values.items() if value is None)
    if missing:
        raise InvalidParams(f"Config keys without a value in {path}: {', '.join(missing)}")
    return values


def load_train_config(
    path: Optional[Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> TrainConfig:
    """
    Build a TrainConfig from defaults, an optional file and CLI overrides.

    Later sources win: model defaults < config file < overrides. Override
    entries whose value is None are ignored, so unset CLI flags fall through.

    Args:
        path: Optional key=value config file.
        overrides: Values from CLI flags.

    Returns:
        Validated TrainConfig.
    """
    merged: Dict[str, Any] = {}
    if path is None and settings.default_train_config is not None:
        path = settings.default_train_config
    if path is not None:
        merged.update(read_config_file(path))
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    return TrainConfig.model_validate(merged)
