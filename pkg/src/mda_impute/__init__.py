"""MDA Impute - Bayesian multiple imputation for longitudinal clinical trials."""

__version__ = "0.9.0"
__author__ = "MDA Impute Team"
__license__ = "MIT"
