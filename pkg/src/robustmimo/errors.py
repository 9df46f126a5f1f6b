"""Exception hierarchy used across the package."""

import numpy as np

__all__ = [
    "RobustMimoError",
    "InvalidParameterError",
    "ContractError",
    "SingularMatrixError",
    "SingularPowerError",
    "DegenerateTransferError",
    "TransferError",
    "InvariantViolationError",
    "ConvergenceError",
    "IrreducibleError",
    "NumericalError",
    "NoFloorError",
    "AlgorithmError",
    "ConfigError",
]


class RobustMimoError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(RobustMimoError, ValueError):
    """A scalar or configuration parameter is outside its valid range."""


class ContractError(RobustMimoError, ValueError):
    """An object was passed where its direction or shape does not fit."""


class SingularMatrixError(RobustMimoError, np.linalg.LinAlgError):
    """A matrix that must be invertible is numerically singular."""


class SingularPowerError(RobustMimoError, ValueError):
    """A diagonal power matrix has a zero (or negative) entry."""


class DegenerateTransferError(RobustMimoError):
    """The scaling factor of a power transfer is undefined (alpha == 0)."""


class TransferError(RobustMimoError):
    """The linear system of a user-wise power transfer could not be solved."""


class InvariantViolationError(RobustMimoError):
    """A result violates a property that must hold by construction."""


class ConvergenceError(RobustMimoError):
    """An iterative solver hit its iteration cap.

    Attributes
    ----------
    last_iterate : object
        Best or last available iterate.
    residual : float
        Optimality residual (or gap) at `last_iterate`.
    """

    def __init__(self, message, last_iterate=None, residual=float("nan")):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.residual = residual


class IrreducibleError(RobustMimoError):
    """The min-max eigensystem has no strictly positive Perron vector."""

    def __init__(self, message, omega=None):
        super().__init__(message)
        self.omega = omega


class NumericalError(RobustMimoError):
    """A quantity that must be real came out with a large imaginary part."""


class NoFloorError(RobustMimoError):
    """The high-SNR AMSE floor does not exist (no estimation error)."""


class AlgorithmError(RobustMimoError):
    """Wraps an error raised inside an alternating-optimization iteration."""

    def __init__(self, message, iteration):
        super().__init__(message)
        self.iteration = iteration


class ConfigError(RobustMimoError, ValueError):
    """Invalid configuration text; message carries key path and line."""
