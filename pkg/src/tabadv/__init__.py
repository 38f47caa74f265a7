"""Desk-scale adversarial attack/defense evaluation for tabular security detectors."""

__version__ = "0.1.0"
