"""Full counting statistics of charge transfer through a resonant level.

Two independent routes to the large-deviation function are provided: the
analytic energy integral (:mod:`rlmfcs.fcs_analytic`) and an exact
finite-size, finite-time determinant (:mod:`rlmfcs.finite_time_engine`).
"""

__version__ = "0.1.0"

from .baths import BathConfig, occupation
from .errors import (BranchPointError, ConfigError, DeterminantError, NumericalError,
                     QuadratureError, QuantizationError)
from .fcs_analytic import (CountingFields, Direction, QuadratureSpec, cumulant, fluctuation_gap,
                           large_deviation, levitov_lesovik_closed)
from .scattering import ModelParams, phase_factor, solve_quantization, transmission_prob

__all__ = [
    "__version__",
    "BathConfig",
    "occupation",
    "ModelParams",
    "phase_factor",
    "transmission_prob",
    "solve_quantization",
    "CountingFields",
    "Direction",
    "QuadratureSpec",
    "large_deviation",
    "levitov_lesovik_closed",
    "cumulant",
    "fluctuation_gap",
    "ConfigError",
    "NumericalError",
    "QuantizationError",
    "BranchPointError",
    "QuadratureError",
    "DeterminantError",
]
