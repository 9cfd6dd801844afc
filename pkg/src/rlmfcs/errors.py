"""Exception hierarchy.

Validation problems subclass ``ValueError`` and numerical failures subclass
``ArithmeticError`` so the CLI can map them onto distinct exit codes.
"""


class ConfigError(ValueError):
    """Invalid user input or violated precondition."""


class NumericalError(ArithmeticError):
    """Base class for failures of a numerical routine."""


class QuantizationError(NumericalError):
    """A bracketing interval of the quantization condition has no root."""


class BranchPointError(NumericalError):
    """A determinant whose logarithm is requested vanishes (or nearly so)."""


class QuadratureError(NumericalError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class DeterminantError(NumericalError):
    """LU factorisation of 1 + G(E - 1) broke down."""
