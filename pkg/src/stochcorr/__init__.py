"""Stochastic-correlation extension of the Vasicek structural credit model."""

__version__ = "0.1.0"
