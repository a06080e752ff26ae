from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Union

import yaml
from pydantic import ValidationError

from adasecant.errors import ConfigError
from adasecant.services.harness import ExperimentConfig, merge_settings


def read_settings(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        with path.open("r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except OSError as e:
        raise ConfigError(f"Failed to read config {path}: {str(e)}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Invalid YAML in {path}: {str(e)}") from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a mapping of settings, got {type(data).__name__}")
    return data


def build_config(settings: Mapping[str, Any]) -> ExperimentConfig:
    try:
        return ExperimentConfig(**merge_settings({}, settings))
    except ValidationError as e:
        raise ConfigError(f"Invalid experiment config: {str(e)}") from e


def load_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
) -> ExperimentConfig:
    """File settings first, then ``overrides`` (CLI flags); ``None`` overrides are skipped."""
    settings = read_settings(path) if path is not None else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            settings[key] = value
    return build_config(settings)


def parse_value(text: str) -> Any:
    """Scalar from a command-line string, typed the way YAML would read it."""
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse value {text!r}: {str(e)}") from e
    # YAML 1.1 reads "1e-3" (no dot) as a string
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return value
    return value


def parse_list(text: str) -> list:
    return [parse_value(item.strip()) for item in text.split(",") if item.strip()]


def parse_assignment(text: str) -> tuple:
    key, eq, value = text.partition("=")
    if not eq or not key.strip():
        raise ConfigError(f"Expected KEY=VALUE, got {text!r}")
    return key.strip(), parse_value(value)
