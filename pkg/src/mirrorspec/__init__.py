"""Spectral analysis of functional-difference operators from quantized mirror curves."""

__version__ = "0.1.0"
