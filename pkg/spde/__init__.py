"""Rough-noise SPDE laboratory: stochastic wave and heat equations driven by
noise white in time and fractional in space."""

__version__ = "0.4.0"
