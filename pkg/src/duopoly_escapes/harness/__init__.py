"""Command-line experiment harness."""

from .config import ExperimentConfig

__all__ = ["ExperimentConfig"]
