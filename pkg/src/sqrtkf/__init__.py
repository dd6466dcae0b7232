"""QR-based square-root Kalman filtering."""

from .errors import (
    DimensionMismatch,
    NotPositiveDefinite,
    NotSymmetric,
    SingularFactor,
    SingularInnovationCovariance,
)
from .filter import (
    FullCovEstimate,
    Innovation,
    StateEstimate,
    SystemModel,
    innovate,
    kalman_gain,
    kf_step,
    predict,
    sqkf_step,
    update,
)
from .linalg import cholesky, qr_r, solve_lower, solve_upper
from .sim import Trajectory, ill_conditioned_problem, random_system, simulate

__version__ = "0.1.0"
