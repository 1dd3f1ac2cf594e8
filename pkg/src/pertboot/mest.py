"""Regression M-estimation and the original (non-bootstrap) pivots.

The estimator solves ``sum_i x_i psi(y_i - x_i' b) = 0`` by damped Newton
iteration started from the least-squares fit, then assembles every quantity
needed for studentization: ``tau_n``, ``s_n^2``, ``sigma_hat`` and the matrices
``A_n``, ``A1_bar``, ``A2_bar`` and ``A2_bar^{-1/2} A1_bar``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._linalg import inv_sqrtm_sym, sqrtm_sym
from .errors import (
    DegenerateStudentizationError,
    InvalidParameterError,
    NonConvergenceError,
    SingularDesignError,
)
from .score import ScoreFunction

RANK_RTOL = 1e-10


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RegressionData:
    """Design ``X`` (n x p) and response ``y`` (n,) for ``y = X beta + eps``."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.float64)
        if X.ndim == 1:
            X = X[:, None]
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise InvalidParameterError(
                f"X must be (n, p) and y (n,), got {X.shape} and {y.shape}"
            )
        n, p = X.shape
        if not (n > p >= 1):
            raise InvalidParameterError(f"need n > p >= 1, got n={n}, p={p}")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise InvalidParameterError("X and y must contain only finite values")
        sv = np.linalg.svd(X, compute_uv=False)
        if sv[-1] <= RANK_RTOL * sv[0]:
            raise SingularDesignError(
                f"design is rank deficient (singular values {sv[0]:.3g} .. {sv[-1]:.3g})"
            )
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "y", _frozen(y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def with_response(self, y: np.ndarray) -> "RegressionData":
        """Same design, new response; skips the rank check."""
        new = object.__new__(RegressionData)
        y = np.array(y, dtype=np.float64)
        if y.shape != self.y.shape or not np.isfinite(y).all():
            raise InvalidParameterError("response must be finite with shape (n,)")
        object.__setattr__(new, "X", self.X)
        object.__setattr__(new, "y", _frozen(y))
        return new


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 50
    max_halvings: int = 30


@dataclass(frozen=True)
class MFit:
    """A fitted M-estimate and its studentization quantities.

    ``sigma_half_inv`` is ``A2_bar^{-1/2} A1_bar``; it is ``None`` when the fit
    is degenerate (perfect fit, so ``s_n2 == 0`` and ``A2_bar`` is singular).
    ``eq_scale`` is the magnitude against which solver tolerances are relative.
    """

    beta_bar: np.ndarray
    residuals: np.ndarray
    tau_n: float
    s_n2: float
    sigma_hat: float
    A_n: np.ndarray
    A1_bar: np.ndarray
    A2_bar: np.ndarray
    sigma_half_inv: np.ndarray | None
    converged: bool
    iterations: int
    eq_norm: float
    eq_scale: float
    degenerate: bool
    data: RegressionData = field(repr=False)
    score: ScoreFunction = field(repr=False)

    @property
    def n(self) -> int:
        return self.data.n

    @property
    def p(self) -> int:
        return self.data.p

    @cached_property
    def A_n_half(self) -> np.ndarray:
        return sqrtm_sym(self.A_n, "A_n")

    @cached_property
    def A_n_inv_half(self) -> np.ndarray:
        return inv_sqrtm_sym(self.A_n, "A_n")

    def require_studentizable(self) -> None:
        if self.degenerate:
            raise DegenerateStudentizationError(
                "fit is degenerate (s_n^2 = 0); studentized pivots are undefined"
            )


def _equation(X, y, beta, psi):
    r = y - X @ beta
    return r, X.T @ psi(r) / X.shape[0]


def m_estimate(
    data: RegressionData, score: ScoreFunction, opts: SolverOptions | None = None
) -> MFit:
    """Solve the M-estimating equation and compute all fit summaries.

    Newton steps ``b + [sum x x' psi'(r)]^{-1} sum x psi(r)`` are halved (at most
    ``opts.max_halvings`` times) until ``||n^{-1} sum x psi(r)||`` decreases.
    Convergence means that norm is at most ``opts.tol * eq_scale`` where
    ``eq_scale = max(1, mean_i ||x_i|| |psi(r_i)|)`` at the least-squares start.

    Raises
    ------
    NonConvergenceError
        If iteration stalls far from a root; ``best`` holds the best iterate.
    DegenerateStudentizationError
        If ``tau_n = mean psi'(residual)`` is not positive.
    """
    opts = opts or SolverOptions()
    X, y = data.X, data.y
    n = data.n
    beta = np.linalg.lstsq(X, y, rcond=None)[0]
    r, g = _equation(X, y, beta, score.eval)
    row_norms = np.linalg.norm(X, axis=1)
    eq_scale = max(1.0, float(np.mean(row_norms * np.abs(score.eval(r)))))
    tol = opts.tol * eq_scale
    norm = float(np.linalg.norm(g))
    iterations = 0
    stalled = False
    while norm > tol and iterations < opts.max_iter:
        J = (X * score.deriv1(r)[:, None]).T @ X / n
        try:
            step = np.linalg.solve(J, g)
        except np.linalg.LinAlgError:
            stalled = True
            break
        t = 1.0
        for _ in range(opts.max_halvings + 1):
            trial = beta + t * step
            r_t, g_t = _equation(X, y, trial, score.eval)
            norm_t = float(np.linalg.norm(g_t))
            if norm_t < norm:
                break
            t *= 0.5
        else:
            stalled = True
            break
        beta, r, g, norm = trial, r_t, g_t, norm_t
        iterations += 1
    converged = norm <= tol
    if not converged and (norm > 1e-6 * eq_scale or not stalled):
        raise NonConvergenceError(
            f"Newton iteration did not converge (||eq|| = {norm:.3e}, "
            f"{iterations} iterations)",
            best=beta.copy(),
            eq_norm=norm,
        )
    return _assemble_fit(data, score, beta, converged, iterations, norm, eq_scale)


def _assemble_fit(data, score, beta, converged, iterations, eq_norm, eq_scale) -> MFit:
    X, y = data.X, data.y
    n = data.n
    resid = y - X @ beta
    psi = score.eval(resid)
    dpsi = score.deriv1(resid)
    tau_n = float(np.mean(dpsi))
    if not tau_n > 0:
        raise DegenerateStudentizationError(f"tau_n = {tau_n:.3e} is not positive")
    s_n2 = float(np.mean(psi * psi))
    sigma_hat = float(np.sqrt(s_n2) / tau_n)
    A_n = X.T @ X / n
    A1 = (X * dpsi[:, None]).T @ X / n
    A2 = (X * (psi * psi)[:, None]).T @ X / n
    y_scale = max(float(np.sqrt(np.mean(y * y))), np.finfo(float).tiny)
    degenerate = bool(np.sqrt(s_n2) <= 1e-12 * y_scale)
    sigma_half_inv = None
    if not degenerate:
        try:
            sigma_half_inv = inv_sqrtm_sym(A2, "A2_bar") @ A1
        except DegenerateStudentizationError:
            degenerate = True
    return MFit(
        beta_bar=_frozen(beta),
        residuals=_frozen(resid),
        tau_n=tau_n,
        s_n2=s_n2,
        sigma_hat=sigma_hat,
        A_n=_frozen(A_n),
        A1_bar=_frozen(A1),
        A2_bar=_frozen(A2),
        sigma_half_inv=None if sigma_half_inv is None else _frozen(sigma_half_inv),
        converged=bool(converged),
        iterations=iterations,
        eq_norm=float(eq_norm),
        eq_scale=float(eq_scale),
        degenerate=degenerate,
        data=data,
        score=score,
    )


def pivot_original_standardized(
    fit: MFit, beta_true: np.ndarray, sigma_true: float
) -> np.ndarray:
    """``sqrt(n) sigma^{-1} A_n^{1/2} (beta_bar - beta)`` with known ``sigma``."""
    if not sigma_true > 0:
        raise InvalidParameterError(f"sigma_true must be > 0, got {sigma_true}")
    diff = fit.beta_bar - np.asarray(beta_true, dtype=np.float64)
    return np.sqrt(fit.n) / sigma_true * (fit.A_n_half @ diff)


def pivot_original_studentized(fit: MFit, beta_true: np.ndarray) -> np.ndarray:
    """``sqrt(n) sigma_hat^{-1} A_n^{1/2} (beta_bar - beta)``."""
    fit.require_studentizable()
    diff = fit.beta_bar - np.asarray(beta_true, dtype=np.float64)
    return np.sqrt(fit.n) / fit.sigma_hat * (fit.A_n_half @ diff)


def pivot_original_hetero(fit: MFit, beta_true: np.ndarray) -> np.ndarray:
    """Sandwich-studentized pivot ``sqrt(n) A2_bar^{-1/2} A1_bar (beta_bar - beta)``."""
    fit.require_studentizable()
    if np.linalg.cond(fit.A1_bar) > 1e12:
        raise DegenerateStudentizationError("A1_bar is numerically singular")
    diff = fit.beta_bar - np.asarray(beta_true, dtype=np.float64)
    return np.sqrt(fit.n) * (fit.sigma_half_inv @ diff)
