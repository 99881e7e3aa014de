"""Longitudinal dataset model."""
