"""Semi-discrete Brenier maps, Alexandrov checks and regularity diagnostics."""

__version__ = "0.1.0"
