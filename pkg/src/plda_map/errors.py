"""Exception and warning types shared across the package."""

import numpy as np


class PldaError(Exception):
    """Base class for errors raised by this package."""


class DatasetError(PldaError, ValueError):
    """Malformed or insufficient training/evaluation data."""


class DimensionError(PldaError, ValueError):
    """Vector or matrix dimension does not match the model."""


class SingularCovarianceError(PldaError, np.linalg.LinAlgError):
    """A covariance that must be positive definite is (numerically) singular."""


class FormatError(PldaError, ValueError):
    """A text file does not follow the expected layout."""


class UnresolvedIdError(PldaError, LookupError):
    """An enrollment or test identifier has no vector."""

    def __init__(self, ident, where=""):
        self.ident = ident
        msg = f"unresolved id {ident!r}"
        if where:
            msg += f" in {where}"
        super().__init__(msg)


class ConvergenceWarning(UserWarning):
    """EM stopped at the iteration cap before meeting its tolerance."""
