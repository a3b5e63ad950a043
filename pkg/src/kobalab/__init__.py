"""Kobayashi-geometry laboratory on model domains in C^n."""
__version__ = "0.1.0"
