"""Part-based implicit surface reconstruction toolkit."""

__version__ = "0.1.0"
