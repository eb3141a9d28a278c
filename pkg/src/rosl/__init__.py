"""Relaxed one-sided Lipschitz inclusions solved by damped projection."""

__version__ = "0.1.0"
