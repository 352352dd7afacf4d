"""Shared dense linear-algebra helpers (rank rule, pseudo-inverse, Cholesky with jitter)."""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla

EPS = np.finfo(float).eps


def rank_tol(s: np.ndarray, shape: tuple[int, int]) -> float:
    """Singular-value threshold ``max(dim) * eps * sigma_max``."""
    if s.size == 0:
        return 0.0
    return max(shape) * EPS * float(s[0])


def numerical_rank(mat: np.ndarray) -> int:
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    if mat.size == 0:
        return 0
    s = np.linalg.svd(mat, compute_uv=False)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol(s, mat.shape)))


def pinv(mat: np.ndarray) -> np.ndarray:
    """SVD pseudo-inverse using the package-wide rank threshold."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    u, s, vt = np.linalg.svd(mat, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((mat.shape[1], mat.shape[0]))
    keep = s > rank_tol(s, mat.shape)
    return (vt[keep].T / s[keep]) @ u[:, keep].T


def cho_factor_jitter(mat: np.ndarray, rel_jitter: float, exc: type[Exception], what: str):
    """Cholesky factor of a symmetric matrix, retrying once with ``rel_jitter * tr/dim`` on the diagonal.

    Raises ``exc`` if the retry also fails.
    """
    mat = 0.5 * (mat + mat.T)
    try:
        return sla.cho_factor(mat, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        pass
    n = mat.shape[0]
    jitter = rel_jitter * np.trace(mat) / n
    if not np.isfinite(jitter) or jitter <= 0.0:
        raise exc(f"{what} is not positive definite")
    try:
        return sla.cho_factor(mat + jitter * np.eye(n), lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        raise exc(f"{what} is not positive definite even after jitter {jitter:.3g}") from None
