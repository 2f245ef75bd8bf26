"""Dual first-order methods with certified primal error bounds."""

__version__ = "0.1.0"
