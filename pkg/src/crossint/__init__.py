"""Tensor-train cross and Fourier-TT integration with a basket-option benchmark."""

__version__ = "0.1.0"
