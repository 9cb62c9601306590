"""Low-rank bandit convex optimization for high-dimensional dynamic pricing."""

__version__ = "0.1.0"
