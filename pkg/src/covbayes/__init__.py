"""Nonparametric Bayesian estimation of covariate-based point process intensities."""

__version__ = "0.1.0"
