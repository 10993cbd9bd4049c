"""Defect-cocycle analysis of positive subunital maps."""

__version__ = "0.1.0"
