"""Top-level package for fosls."""

__version__ = "0.1.0"
