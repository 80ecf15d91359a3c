"""Genetic-algorithm autotuning of compiler optimization flags."""

__version__ = "0.1.0"
