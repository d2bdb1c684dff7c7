"""Inverse spectral problems on discretized closed manifolds."""

__version__ = "0.1.0"
