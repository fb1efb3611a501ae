"""Multilevel multivariate analysis of variance for balanced crossed designs."""

__version__ = "0.1.0"
