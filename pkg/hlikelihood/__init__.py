"""Hierarchical-likelihood toolkit: Bartlett audits, MHLE, predictive distributions and simulations."""

__version__ = "0.1.0"
