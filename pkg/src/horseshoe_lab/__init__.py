"""Numerical laboratory for a planar horseshoe carrying a cubic homoclinic tangency."""

from .params import ParamError, ParamSet, SolverHints, solve_params, validate
from .symbolic import SymbolWord, code, decode
from .thermo import equilibrium_measure, pressure, transfer_apply

__all__ = [
    "ParamError", "ParamSet", "SolverHints", "solve_params", "validate",
    "SymbolWord", "code", "decode",
    "equilibrium_measure", "pressure", "transfer_apply",
]

__version__ = "0.1.0"
