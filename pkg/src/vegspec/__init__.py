"""Interpretable shallow neural networks for labeled vegetation spectra."""

__version__ = "0.1.0"
