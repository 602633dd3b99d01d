"""Toolkit for pedagogically structured KM/KH code-review feedback on buggy Java programs."""

__version__ = "0.1.0"
