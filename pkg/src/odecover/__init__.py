"""Smoothness, metric entropy and noisy recovery for ODE solution classes."""

__version__ = "0.1.0"
