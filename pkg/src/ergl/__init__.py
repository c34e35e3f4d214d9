"""Event relational graph learning for acoustic scene classification."""

__version__ = "0.1.0"
