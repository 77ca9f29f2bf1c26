"""Numerical laboratory for spatial localization of incompressible MHD mild solutions."""

from mhdlab.field import GridSpec

__all__ = ["GridSpec"]
__version__ = "0.1.0"
