"""Nitsche finite elements for the scalar Signorini contact problem."""

__version__ = "0.1.0"
