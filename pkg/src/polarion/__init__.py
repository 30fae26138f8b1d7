"""Quantized polariton models for layered structures and driven-dissipative dynamics."""
__version__ = "0.1.0"
