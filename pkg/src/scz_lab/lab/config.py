"""Experiment configuration: JSON files checked against a published schema."""

import json
from importlib import resources
from pathlib import Path

import jsonschema

from ..errors import ConfigError


def schema() -> dict:
    return json.loads(resources.files(__package__).joinpath("config.schema.json").read_text())


def _pointer(path) -> str:
    return "/" + "/".join(str(p).replace("~", "~0").replace("/", "~1") for p in path)


def validate_config(cfg: dict) -> dict:
    """Return ``cfg`` unchanged or raise :class:`ConfigError` at the first violation's JSON pointer."""
    from .scenarios import REGISTRY

    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (list(e.absolute_path), e.message))
    if errors:
        err = errors[0]
        raise ConfigError(err.message, _pointer(err.absolute_path))
    if cfg["scenario"] not in REGISTRY:
        raise ConfigError(f"unknown scenario {cfg['scenario']!r}", "/scenario")
    return cfg


def load_config(path) -> dict:
    path = Path(path)
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"not valid JSON ({exc.msg} at line {exc.lineno})") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from exc
    return validate_config(cfg)
