"""Spatio-temporal wind farm power scenarios from heteroscedastic forecasts and a Gaussian copula."""

__version__ = "0.1.0"
