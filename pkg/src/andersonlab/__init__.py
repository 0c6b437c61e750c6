"""Rescaled eigenvalue statistics of the Anderson model with singular disorder."""

__version__ = "0.1.0"
