"""Square-root Kalman filter built on QR updates of covariance factors.

The filter never stores a covariance. It carries an upper triangular factor
``F`` with ``Sigma = F.T @ F`` and propagates it with :func:`~sqrtkf.linalg.qr_r`,
so the implied covariance is positive semidefinite whatever the rounding.

A conventional full-covariance filter (:func:`kf_step`) with the Joseph-form
update is kept alongside as an oracle and as the low precision baseline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, SingularFactor, SingularInnovationCovariance
from .linalg import as_matrix, cholesky, is_upper_triangular, qr_r, solve_lower, solve_upper


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


def _vector(v, length: int, name: str, dtype) -> np.ndarray:
    v = np.asarray(v, dtype=dtype).reshape(-1)
    if v.shape[0] != length:
        raise DimensionMismatch(f"{name} has length {v.shape[0]}, expected {length}")
    return v


@dataclass(frozen=True)
class StateEstimate:
    """Mean and upper triangular covariance factor, ``cov == factor.T @ factor``."""

    mean: np.ndarray
    factor: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean)
        if mean.dtype.kind != "f":
            mean = mean.astype(np.float64)
        mean = mean.reshape(-1)
        factor = as_matrix(self.factor, dtype=mean.dtype)
        if factor.shape != (mean.size, mean.size):
            raise DimensionMismatch(
                f"factor shape {factor.shape} does not match state dimension {mean.size}"
            )
        if not is_upper_triangular(factor):
            raise ValueError("factor must be upper triangular")
        if np.any(np.diag(factor) < 0):
            raise ValueError("factor must have a nonnegative diagonal")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "factor", _frozen(factor))

    @classmethod
    def from_covariance(cls, mean, cov) -> "StateEstimate":
        """Build an estimate from a full covariance by Cholesky factorisation."""
        mean = np.asarray(mean)
        if mean.dtype.kind != "f":
            mean = mean.astype(np.float64)
        return cls(mean, cholesky(np.asarray(cov, dtype=mean.dtype)))

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def cov(self) -> np.ndarray:
        return self.factor.T @ self.factor

    def astype(self, dtype) -> "StateEstimate":
        return StateEstimate(self.mean.astype(dtype), self.factor.astype(dtype))


@dataclass(frozen=True)
class SystemModel:
    """Discrete LTI system ``x' = A x + B u + w``, ``y = C x + v``.

    Noise enters through upper triangular factors: ``W = noise_w.T @ noise_w``
    and ``V = noise_v.T @ noise_v``. ``noise_w`` may be singular, ``noise_v``
    may not. ``B`` may have zero columns when the system has no input.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    noise_w: np.ndarray
    noise_v: np.ndarray

    def __post_init__(self):
        A = as_matrix(self.A)
        dtype = A.dtype
        n = A.shape[0]
        if A.shape != (n, n):
            raise DimensionMismatch(f"A must be square, got {A.shape}")
        B = np.asarray(self.B, dtype=dtype)
        if B.size == 0:
            B = np.zeros((n, 0), dtype=dtype)
        B = B.reshape(n, -1) if B.ndim == 1 else B
        if B.ndim != 2 or B.shape[0] != n:
            raise DimensionMismatch(f"B must have {n} rows, got shape {B.shape}")
        if not np.all(np.isfinite(B)):
            raise ValueError("matrix has non-finite entries")
        C = as_matrix(np.atleast_2d(np.asarray(self.C, dtype=dtype)))
        if C.shape[1] != n:
            raise DimensionMismatch(f"C must have {n} columns, got shape {C.shape}")
        m = C.shape[0]
        gw = as_matrix(self.noise_w, dtype=dtype)
        gv = as_matrix(self.noise_v, dtype=dtype)
        if gw.shape != (n, n):
            raise DimensionMismatch(f"noise_w must be {n}x{n}, got {gw.shape}")
        if gv.shape != (m, m):
            raise DimensionMismatch(f"noise_v must be {m}x{m}, got {gv.shape}")
        for name, g in (("noise_w", gw), ("noise_v", gv)):
            if not is_upper_triangular(g):
                raise ValueError(f"{name} must be upper triangular")
            if np.any(np.diag(g) < 0):
                raise ValueError(f"{name} must have a nonnegative diagonal")
        if np.any(np.diag(gv) <= 0):
            raise SingularFactor("noise_v must have a strictly positive diagonal")
        for name, value in zip(("A", "B", "C", "noise_w", "noise_v"), (A, B, C, gw, gv)):
            object.__setattr__(self, name, _frozen(value))

    @classmethod
    def from_covariances(cls, A, B, C, W, V) -> "SystemModel":
        A = as_matrix(A)
        W = np.asarray(W, dtype=A.dtype)
        gw = np.zeros_like(W) if not np.any(W) else cholesky(W)
        return cls(A, B, C, gw, cholesky(np.asarray(V, dtype=A.dtype)))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.C.shape[0]

    @property
    def p(self) -> int:
        return self.B.shape[1]

    @property
    def dtype(self):
        return self.A.dtype

    @property
    def W(self) -> np.ndarray:
        return self.noise_w.T @ self.noise_w

    @property
    def V(self) -> np.ndarray:
        return self.noise_v.T @ self.noise_v

    def astype(self, dtype) -> "SystemModel":
        return SystemModel(*(getattr(self, k).astype(dtype) for k in ("A", "B", "C", "noise_w", "noise_v")))


@dataclass(frozen=True)
class Innovation:
    """Measurement residual and the factor of its covariance, ``S == factor.T @ factor``."""

    residual: np.ndarray
    factor: np.ndarray


@dataclass(frozen=True)
class FullCovEstimate:
    """Mean and explicitly stored covariance, used by the conventional filter."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean)
        if mean.dtype.kind != "f":
            mean = mean.astype(np.float64)
        mean = mean.reshape(-1)
        cov = np.asarray(self.cov, dtype=mean.dtype)
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(f"cov shape {cov.shape} does not match state dimension {mean.size}")
        object.__setattr__(self, "mean", _frozen(mean))
        object.__setattr__(self, "cov", _frozen(cov))

    def astype(self, dtype) -> "FullCovEstimate":
        return FullCovEstimate(self.mean.astype(dtype), self.cov.astype(dtype))


def _check_state(est, model: SystemModel):
    if est.mean.size != model.n:
        raise DimensionMismatch(f"estimate has dimension {est.mean.size}, model has {model.n}")


def predict(est: StateEstimate, model: SystemModel, u=None) -> StateEstimate:
    """Propagate the estimate one step through the noise-free dynamics.

    ``factor' = qr_r(F A^T, noise_w)``, so that
    ``factor'^T factor' = A Sigma A^T + W``.
    """
    _check_state(est, model)
    A = model.A
    mean = A @ est.mean
    if model.p:
        mean = mean + model.B @ _vector(u, model.p, "u", est.mean.dtype)
    factor = qr_r(est.factor @ A.T, model.noise_w)
    return StateEstimate(mean, factor)


def innovate(est_pred: StateEstimate, model: SystemModel, y) -> Innovation:
    """Measurement residual ``y - C mean`` and factor of ``C Sigma C^T + V``."""
    _check_state(est_pred, model)
    y = _vector(y, model.m, "y", est_pred.mean.dtype)
    residual = y - model.C @ est_pred.mean
    G = qr_r(est_pred.factor @ model.C.T, model.noise_v)
    return Innovation(residual, G)


def kalman_gain(est_pred: StateEstimate, C, G) -> np.ndarray:
    """Kalman gain ``Sigma C^T S^{-1}`` from triangular solves against ``G``.

    With ``S = G^T G``, ``S^{-1} C Sigma`` is obtained by a forward solve with
    ``G^T`` followed by a back solve with ``G``. ``S`` itself is never formed.

    Raises
    ------
    SingularFactor
        If ``G`` has a zero or negligible diagonal entry.
    """
    C = np.asarray(C, dtype=est_pred.mean.dtype)
    G = np.asarray(G, dtype=est_pred.mean.dtype)
    if C.ndim != 2 or C.shape[1] != est_pred.dim or G.shape != (C.shape[0], C.shape[0]):
        raise DimensionMismatch(f"incompatible shapes C {C.shape}, G {G.shape}")
    F = est_pred.factor
    t1 = solve_lower(G.T, C)
    t2 = solve_upper(G, t1)
    return (t2 @ (F.T @ F)).T


def update(est_pred: StateEstimate, model: SystemModel, inn: Innovation, L) -> StateEstimate:
    """Measurement update in factored Joseph form.

    ``factor' = qr_r(F (I - L C)^T, noise_v L^T)``, whose Gram matrix is
    ``(I - L C) Sigma (I - L C)^T + L V L^T``.
    """
    _check_state(est_pred, model)
    dtype = est_pred.mean.dtype
    L = np.asarray(L, dtype=dtype)
    if L.shape != (model.n, model.m):
        raise DimensionMismatch(f"gain must be {model.n}x{model.m}, got {L.shape}")
    residual = _vector(inn.residual, model.m, "residual", dtype)
    mean = est_pred.mean + L @ residual
    i_lc = np.eye(model.n, dtype=dtype) - L @ model.C
    factor = qr_r(est_pred.factor @ i_lc.T, model.noise_v @ L.T)
    return StateEstimate(mean, factor)


def sqkf_step(est: StateEstimate, model: SystemModel, u, y) -> StateEstimate:
    """One full square-root filter step: predict with ``u``, then absorb ``y``."""
    pred = predict(est, model, u)
    inn = innovate(pred, model, y)
    L = kalman_gain(pred, model.C, inn.factor)
    return update(pred, model, inn, L)


def kf_step(est: FullCovEstimate, model: SystemModel, u, y) -> FullCovEstimate:
    """Conventional Kalman filter step on the full covariance.

    Forms ``S`` explicitly, solves for the gain with a general dense solver and
    applies the Joseph-form covariance update. No symmetrisation or other repair
    is done, so rounding damage shows up in the returned covariance.
    """
    _check_state(est, model)
    dtype = est.mean.dtype
    A, C = model.A, model.C
    mean = A @ est.mean
    if model.p:
        mean = mean + model.B @ _vector(u, model.p, "u", dtype)
    cov = A @ est.cov @ A.T + model.W

    y = _vector(y, model.m, "y", dtype)
    z = y - C @ mean
    S = C @ cov @ C.T + model.V
    try:
        L = np.linalg.solve(S, C @ cov).T
    except np.linalg.LinAlgError as exc:
        raise SingularInnovationCovariance(str(exc)) from None

    i_lc = np.eye(model.n, dtype=dtype) - L @ C
    mean = mean + L @ z
    cov = i_lc @ cov @ i_lc.T + L @ model.V @ L.T
    return FullCovEstimate(mean, cov)
