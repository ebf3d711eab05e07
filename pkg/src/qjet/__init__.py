"""Jet tagging with classical and quantum graph neural networks."""

__version__ = "0.1.0"
