"""Selective randomization inference for adaptive multi-stage experiments."""

__version__ = "0.1.0"
