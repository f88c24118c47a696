"""Isolation anomaly checker for list-append and register histories."""

from .checker import CONSISTENCY_MODELS, Report, check
from .histio import LIST_APPEND, REGISTER, Observation, parse_history, read_history

__all__ = [
    "CONSISTENCY_MODELS",
    "LIST_APPEND",
    "REGISTER",
    "Observation",
    "Report",
    "check",
    "parse_history",
    "read_history",
]
