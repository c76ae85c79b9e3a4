"""Numerical laboratory for the SK spin glass at high temperature.

Scalar replica-symmetric theory, the TAP iteration and its conditioned
construction, free-energy functionals with their duality, Hessian spectra
and exact small-N references.
"""

from .errors import CapacityError, ConfigError, DomainError, NumericalError, ParameterError, SkTapError
from .rs_scalars import ModelParams, RsSolution, solve_q

__all__ = [
    "CapacityError",
    "ConfigError",
    "DomainError",
    "NumericalError",
    "ParameterError",
    "SkTapError",
    "ModelParams",
    "RsSolution",
    "solve_q",
]

__version__ = "0.1.0"
