"""Configuration-driven experiment runner."""

from .config import load_config, validate_config
from .report import Record, Report
from .runner import run_scenario
from .scenarios import REGISTRY, list_scenarios

__all__ = ["load_config", "validate_config", "Record", "Report", "run_scenario", "REGISTRY", "list_scenarios"]
