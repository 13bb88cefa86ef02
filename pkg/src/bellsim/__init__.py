"""Reduced states, measurement dynamics and Bell correlations for small composite quantum systems."""

__version__ = "0.1.0"
