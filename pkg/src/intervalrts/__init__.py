"""Return-time statistics for piecewise-monotone interval maps."""

__version__ = "0.1.0"
