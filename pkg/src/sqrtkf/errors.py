"""Exception hierarchy shared by the linear algebra, filter and bench layers."""

import numpy as np


class DimensionMismatch(ValueError):
    """Operand shapes are not conformable."""


class NotSymmetric(np.linalg.LinAlgError):
    """A matrix expected to be symmetric is not, beyond tolerance."""


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Cholesky hit a pivot that is not strictly positive."""


class SingularFactor(np.linalg.LinAlgError):
    """A triangular factor has a zero (or negligible) diagonal entry."""


class SingularInnovationCovariance(np.linalg.LinAlgError):
    """The dense solve against the innovation covariance failed."""
