"""Poisson point-process GLMs for binned spike trains with perfect predictors."""
__version__ = "0.1.0"
