"""Moment-matching networks for sampling-based sequence generation."""

__version__ = "0.1.0"
