"""Numerical laboratory for critical radius geometry, exponential weight
classes, exponential maximal operators and exponentially decaying singular
kernels attached to Schrodinger operators."""

from . import errors
from .grid import Ball, BallFamily, GridDomain, GridFunction

__all__ = ["errors", "Ball", "BallFamily", "GridDomain", "GridFunction"]
__version__ = "0.1.0"
