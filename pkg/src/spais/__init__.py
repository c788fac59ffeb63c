"""Adaptive importance sampling for rare failures of sequential systems."""
