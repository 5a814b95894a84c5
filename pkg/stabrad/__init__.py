"""Approximate stability radii of A + B Delta C under sparse structured perturbations."""

__version__ = "0.1.0"
