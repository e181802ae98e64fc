"""Contract-bounded evidence activation with lexicographic commitment validation."""

__version__ = "0.1.0"
