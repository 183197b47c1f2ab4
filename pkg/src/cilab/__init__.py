"""Numerical laboratory for oscillatory two-solution constructions in
one-dimensional 2x2 systems of conservation laws."""

__version__ = "0.1.0"

from .fluxdsl import (FluxModel, differentiate, load_flux, parse_flux,
                      print_flux)
from .fluxcore import (check_condition, eigen_frame, eval_jet,
                       integral_curve_curvature, structure_constants)

__all__ = [
    "FluxModel", "differentiate", "load_flux", "parse_flux", "print_flux",
    "check_condition", "eigen_frame", "eval_jet",
    "integral_curve_curvature", "structure_constants",
]
