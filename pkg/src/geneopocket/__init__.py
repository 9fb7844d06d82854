"""Volumetric pocket detection with group equivariant non-expansive operators."""

__version__ = "0.1.0"
