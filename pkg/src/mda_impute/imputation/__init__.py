"""Dropout imputation and multiple-imputation combining."""
