"""Dense matrix primitives for square-root filtering.

Every "matrix square root" here is a right factor: ``M = U.T @ U`` with ``U``
upper triangular and a nonnegative diagonal. All routines keep the floating
point dtype of their inputs, so the same code runs in single or double
precision.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, NotPositiveDefinite, NotSymmetric, SingularFactor

SYM_TOL = 1e-10


def as_matrix(a, dtype=None) -> np.ndarray:
    """Coerce ``a`` to a finite 2-D floating array."""
    m = np.asarray(a, dtype=dtype)
    if m.dtype.kind != "f":
        m = m.astype(np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise DimensionMismatch(f"expected a 2-D matrix, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has non-finite entries")
    return m


def is_upper_triangular(u: np.ndarray) -> bool:
    return u.ndim == 2 and u.shape[0] == u.shape[1] and not np.any(np.tril(u, -1))


def cholesky(m, sym_tol: float = SYM_TOL) -> np.ndarray:
    """Upper Cholesky factor ``U`` of a symmetric positive definite ``m``.

    Parameters
    ----------
    m : array_like, shape (n, n)
        Symmetric positive definite matrix.
    sym_tol : float
        Allowed asymmetry, relative to the Frobenius norm of ``m``.

    Returns
    -------
    U : ndarray, shape (n, n)
        Upper triangular with positive diagonal, ``U.T @ U == m``.

    Raises
    ------
    NotSymmetric
        If ``|m - m.T|_F > sym_tol * |m|_F``.
    NotPositiveDefinite
        If a nonpositive pivot is encountered. No pivoting or jitter is applied.
    """
    m = as_matrix(m)
    n, k = m.shape
    if n != k:
        raise DimensionMismatch(f"cholesky needs a square matrix, got {m.shape}")
    scale = np.linalg.norm(m)
    if np.linalg.norm(m - m.T) > sym_tol * scale:
        raise NotSymmetric("matrix is not symmetric within tolerance")
    try:
        lower = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    return np.triu(lower.T)


def _householder_r(a: np.ndarray) -> np.ndarray:
    # R-only Householder triangularisation; Q is never accumulated.
    r = a.copy()
    rows, cols = r.shape
    for j in range(min(rows - 1, cols)):
        x = r[j:, j]
        normx = np.linalg.norm(x)
        if normx == 0.0:
            continue
        alpha = -normx if x[0] >= 0 else normx
        v = x.copy()
        v[0] -= alpha
        vnorm2 = v @ v
        if vnorm2 == 0.0:
            continue
        r[j:, j:] -= np.outer(v, (2.0 / vnorm2) * (v @ r[j:, j:])).astype(r.dtype, copy=False)
        r[j + 1 :, j] = 0.0
    return r


def qr_r(top, bottom) -> np.ndarray:
    """Triangular factor of two vertically stacked matrices.

    Returns the ``n x n`` upper triangular ``R`` with nonnegative diagonal such
    that ``R.T @ R == top.T @ top + bottom.T @ bottom``. Given square roots of
    ``A`` and ``B`` this is a square root of ``A + B``.

    Rank deficient stacks give zero diagonal entries rather than an error.
    """
    top = as_matrix(top)
    bottom = as_matrix(bottom)
    if top.shape[1] != bottom.shape[1]:
        raise DimensionMismatch(
            f"column counts differ: top has {top.shape[1]}, bottom has {bottom.shape[1]}"
        )
    dtype = np.result_type(top, bottom)
    stacked = np.vstack([top, bottom]).astype(dtype, copy=False)
    rows, n = stacked.shape
    r = _householder_r(stacked)[:n]
    if rows < n:
        r = np.vstack([r, np.zeros((n - rows, n), dtype=dtype)])
    r = np.triu(r)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0).astype(dtype)
    return signs[:, None] * r


def _sing_tol(diag: np.ndarray) -> float:
    return diag.size * np.finfo(diag.dtype).eps * np.max(np.abs(diag), initial=0.0)


def _check_triangular_solve(t: np.ndarray, b: np.ndarray) -> np.ndarray:
    if t.ndim != 2 or t.shape[0] != t.shape[1]:
        raise DimensionMismatch(f"triangular factor must be square, got {t.shape}")
    if b.shape[0] != t.shape[0]:
        raise DimensionMismatch(f"right-hand side has {b.shape[0]} rows, factor is {t.shape[0]}")
    diag = np.diag(t)
    if not np.all(np.isfinite(diag)) or np.any(np.abs(diag) <= _sing_tol(diag)) or not np.all(diag > 0):
        raise SingularFactor("triangular factor has a zero or negligible diagonal entry")
    return diag


def solve_lower(lower, b) -> np.ndarray:
    """Solve ``lower @ X = b`` by forward substitution.

    ``lower`` is typically ``G.T`` for an upper factor ``G``; only its lower
    triangle is read. ``b`` may be a vector or an ``(n, k)`` matrix.
    """
    lower = np.asarray(lower)
    b = np.asarray(b)
    _check_triangular_solve(lower, b)
    dtype = np.result_type(lower, b)
    return solve_triangular(lower.astype(dtype, copy=False), b.astype(dtype, copy=False), lower=True)


def solve_upper(upper, b) -> np.ndarray:
    """Solve ``upper @ X = b`` by back substitution."""
    upper = np.asarray(upper)
    b = np.asarray(b)
    _check_triangular_solve(upper, b)
    dtype = np.result_type(upper, b)
    return solve_triangular(upper.astype(dtype, copy=False), b.astype(dtype, copy=False), lower=False)
