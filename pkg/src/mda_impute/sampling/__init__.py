"""Samplers: distributions, sequential-regression MDA, multivariate probit and iMH."""
