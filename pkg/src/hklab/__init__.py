"""Numerical laboratory for fully nonlinear equations on flat hyperkähler tori."""

from . import cones, estimates, fields, quatlin, solver
from .errors import HKError

__all__ = ["quatlin", "cones", "fields", "solver", "estimates", "HKError"]
__version__ = "0.1.0"
