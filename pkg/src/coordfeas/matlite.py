"""Small dense linear-algebra helpers: numerical rank, minimum-norm
particular solutions and orthonormal null-space bases.

All routines work on plain ``numpy`` arrays and use a scale-relative
singular-value threshold, so results do not change when a matrix is
multiplied by a constant.
"""
from __future__ import annotations

import numpy as np

DEFAULT_TOL = 1e-10


class Inconsistent(ValueError):
    """Raised when ``a @ x = b`` has no solution."""


def _as_matrix(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def _threshold(s: np.ndarray, tol: float) -> float:
    # zero matrix: scale 1 so the threshold never collapses to 0
    scale = s[0] if s.size and s[0] > 0.0 else 1.0
    return tol * scale


def rank_of(a, tol: float = DEFAULT_TOL) -> int:
    """Count singular values above ``tol`` times the largest one."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = _as_matrix(a)
    if a.size == 0:
        return 0
    s = np.linalg.svd(a, compute_uv=False)
    return int(np.count_nonzero(s > _threshold(s, tol)))


def solve_particular(a, b, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Minimum-norm solution of ``a @ x = b``.

    Raises :class:`Inconsistent` when ``rank([a | b]) > rank(a)``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = _as_matrix(a)
    b = np.asarray(b, dtype=float).reshape(-1)
    m, n = a.shape
    if b.shape[0] != m:
        raise ValueError(f"row mismatch: a has {m} rows, b has {b.shape[0]}")
    if m == 0:
        return np.zeros(n)

    u, s, vt = np.linalg.svd(a, full_matrices=False)
    r = int(np.count_nonzero(s > _threshold(s, tol)))
    ub = u.T @ b
    x = vt[:r].T @ (ub[:r] / s[:r])

    # the part of b outside range(a) decides consistency
    b_scale = 1.0 + float(np.max(np.abs(b)))
    resid = a @ x - b
    if r < rank_of(np.column_stack([a, b]), tol) or np.max(np.abs(resid)) > tol * b_scale:
        raise Inconsistent("linear system has no solution")
    return x


def null_basis(a, tol: float = DEFAULT_TOL) -> np.ndarray:
    """Orthonormal basis of ``{x : a @ x = 0}`` as the columns of an n x k array."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = _as_matrix(a)
    m, n = a.shape
    if m == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(a, full_matrices=True)
    r = int(np.count_nonzero(s > _threshold(s, tol)))
    return _fix_signs(vt[r:].T.copy())


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    # deterministic sign: largest-magnitude entry of each vector positive
    if basis.shape[1]:
        idx = np.argmax(np.abs(basis), axis=0)
        basis *= np.where(basis[idx, np.arange(basis.shape[1])] < 0, -1.0, 1.0)
    return basis


def particular_and_null(a, b, tol: float = DEFAULT_TOL) -> tuple[np.ndarray, np.ndarray, int]:
    """``(x, basis, rank)`` from one SVD: minimum-norm solution and null basis.

    Same contracts as :func:`solve_particular` and :func:`null_basis`;
    consistency is judged by the residual of ``x``.
    """
    a = _as_matrix(a)
    b = np.asarray(b, dtype=float).reshape(-1)
    m, n = a.shape
    if b.shape[0] != m:
        raise ValueError(f"row mismatch: a has {m} rows, b has {b.shape[0]}")
    if m == 0:
        return np.zeros(n), np.eye(n), 0
    u, s, vt = np.linalg.svd(a, full_matrices=True)
    r = int(np.count_nonzero(s > _threshold(s, tol)))
    x = vt[:r].T @ ((u[:, :r].T @ b) / s[:r])
    if np.max(np.abs(a @ x - b)) > tol * (1.0 + float(np.max(np.abs(b)))):
        raise Inconsistent("linear system has no solution")
    return x, _fix_signs(vt[r:].T.copy()), r
