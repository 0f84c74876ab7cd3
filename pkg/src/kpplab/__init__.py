"""Numerical laboratory for KPP fronts in 1-periodic media."""

from .periodic import PeriodicFunction

__version__ = "0.1.0"

__all__ = ["PeriodicFunction", "__version__"]
