"""Symmetric matrix square roots via eigendecomposition."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateStudentizationError

EIG_RTOL = 1e-12


def _eigh_checked(a: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    sym = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(sym)
    top = w.max() if w.size else 0.0
    if not np.isfinite(top) or top <= 0.0 or w.min() <= EIG_RTOL * top:
        raise DegenerateStudentizationError(
            f"{what} is not positive definite (eigenvalues {w})"
        )
    return w, v


def sqrtm_sym(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Symmetric positive square root of an SPD matrix."""
    w, v = _eigh_checked(a, what)
    return (v * np.sqrt(w)) @ v.T


def inv_sqrtm_sym(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Symmetric inverse square root of an SPD matrix.

    Eigenvalues below ``1e-12 * max eigenvalue`` raise
    :class:`DegenerateStudentizationError`; nothing is clamped.
    """
    w, v = _eigh_checked(a, what)
    return (v / np.sqrt(w)) @ v.T


def batch_inv_sqrtm_sym(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Inverse square roots of a stack ``(B, p, p)`` of symmetric matrices.

    Returns ``(roots, ok)``; rows failing the eigenvalue test have ``ok`` False
    and NaN roots.
    """
    sym = 0.5 * (a + np.swapaxes(a, -1, -2))
    w, v = np.linalg.eigh(sym)
    top = w.max(axis=-1)
    ok = np.isfinite(top) & (top > 0) & (w.min(axis=-1) > EIG_RTOL * top)
    w = np.where(ok[:, None], w, 1.0)
    roots = np.matmul(v / np.sqrt(w)[:, None, :], np.swapaxes(v, -1, -2))
    roots[~ok] = np.nan
    return roots, ok
