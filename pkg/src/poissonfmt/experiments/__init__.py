"""Declarative experiment runs with deterministic CSV and JSON outputs."""
from __future__ import annotations

from .output import load_summary, run_experiment, write_report
from .runners import RUNNERS, Report
from .schema import CAPS, DEFAULTS, SCHEMA, SCHEMA_VERSION, ConfigError, ExperimentSpec, load_spec

__all__ = [
    "CAPS", "DEFAULTS", "SCHEMA", "SCHEMA_VERSION", "ConfigError", "ExperimentSpec", "Report", "RUNNERS",
    "load_spec", "load_summary", "run_experiment", "write_report",
]
