"""Numerical laboratory for matrix cocycles over concrete dynamical systems."""

from . import cocycles, constructions, dynsys, measures

__all__ = ["cocycles", "constructions", "dynsys", "measures"]
__version__ = "0.1.0"
