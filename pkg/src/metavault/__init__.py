"""Data-vault metadata catalog for heterogeneous data lakes."""

__version__ = "0.1.0"
