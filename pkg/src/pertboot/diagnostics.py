"""Design diagnostics and the score-moment condition for naive studentization.

The design statistic is built from ``d_i = (X'X)^{-1/2} x_i`` and from the
vectors ``z_i`` of distinct products ``x_ij x_ik`` (upper-triangular,
row-major order), orthonormalized over their span.  For well-behaved designs
``n_times_sum`` stays bounded as ``n`` grows.  A single design cannot certify
a rate, so :func:`sweep_design_diagnostics` reports the statistic across
sample sizes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate

from ._linalg import inv_sqrtm_sym
from .errors import DegenerateStudentizationError, InvalidParameterError, SingularDesignError
from .score import ScoreFunction

ZRANK_RTOL = 1e-10


def build_z_vectors(X) -> np.ndarray:
    """Row ``i`` holds ``x_ij x_ik`` for ``j <= k`` in row-major order.

    >>> build_z_vectors([[1.0, 2.0, 3.0]])
    array([[1., 2., 3., 4., 6., 9.]])
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    j, k = np.triu_indices(X.shape[1])
    return X[:, j] * X[:, k]


def canonical_ztilde(Z) -> tuple[np.ndarray, np.ndarray]:
    """Project rows of ``Z`` onto the range of ``Z'Z`` and whiten them.

    Returns ``(Zt, L1)`` with ``Zt = Z L1'`` and ``Zt' Zt = I_r``, where ``r`` is
    the numerical rank (eigenvalues above ``1e-10`` times the largest).
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=np.float64))
    S = Z.T @ Z
    w, U = np.linalg.eigh(0.5 * (S + S.T))
    if not np.isfinite(w).all() or w[-1] <= 0:
        raise DegenerateStudentizationError("Z is identically zero")
    keep = w > ZRANK_RTOL * w[-1]
    L1 = (U[:, keep] / np.sqrt(w[keep])).T
    return Z @ L1.T, L1


@dataclass(frozen=True)
class DesignDiagnostics:
    d_norm_sum: float
    ztilde_norm_sum: float
    n_times_sum: float
    rank_z: int
    alpha: float
    n: int
    p: int

    def to_dict(self) -> dict:
        return asdict(self)


def design_diagnostics(X, alpha: float = 0.5) -> DesignDiagnostics:
    """Boundedness statistic for the design.

    ``d_norm_sum = n^{alpha/2} (sum ||d_i||^{6+2 alpha})^{1/2}``,
    ``ztilde_norm_sum = sum ||z~_i||^4`` and
    ``n_times_sum = n (d_norm_sum + ztilde_norm_sum)``.
    """
    if not 0.0 < 2.0 * alpha <= 1.0:
        raise InvalidParameterError(f"alpha must be in (0, 1/2], got {alpha}")
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    try:
        D_inv = inv_sqrtm_sym(X.T @ X, "X'X")
    except DegenerateStudentizationError as exc:
        raise SingularDesignError(str(exc)) from exc
    d = X @ D_inv
    d_norms = np.linalg.norm(d, axis=1)
    d_term = n ** (alpha / 2.0) * np.sqrt(np.sum(d_norms ** (6.0 + 2.0 * alpha)))
    Zt, L1 = canonical_ztilde(build_z_vectors(X))
    z_term = float(np.sum(np.sum(Zt * Zt, axis=1) ** 2))
    return DesignDiagnostics(
        d_norm_sum=float(d_term),
        ztilde_norm_sum=z_term,
        n_times_sum=float(n * (d_term + z_term)),
        rank_z=int(L1.shape[0]),
        alpha=alpha,
        n=n,
        p=p,
    )


def gaussian_design(n: int, p: int, rng: np.random.Generator) -> np.ndarray:
    """Independent standard normal design columns (no intercept)."""
    return rng.standard_normal((n, p))


def sweep_design_diagnostics(make_design, n_grid, alpha: float = 0.5) -> list[DesignDiagnostics]:
    """``design_diagnostics(make_design(n))`` for each ``n``; see ``ratio_spread``."""
    return [design_diagnostics(make_design(int(n)), alpha) for n in n_grid]


def ratio_spread(diags) -> float:
    """max / min of ``n_times_sum`` over a sweep; near 1 means bounded."""
    vals = np.array([d.n_times_sum for d in diags])
    return float(vals.max() / vals.min())


@dataclass(frozen=True)
class ScoreMoments:
    """``E psi^2``, ``E psi psi'``, ``E psi'`` and ``E psi^3`` at the error law."""

    Epsi2: float
    Epsi_psi1: float
    Epsi1: float
    Epsi3: float


def naive_studentization_gap(m: ScoreMoments) -> float:
    """Gap ``2 E psi^2 E psi psi' - E psi' E psi^3``.

    A nonzero gap means naive studentization of the perturbation bootstrap
    misses the skewness term, so it is not second-order accurate.  For least
    squares the gap is ``-E e^3``.
    """
    vals = (m.Epsi2, m.Epsi_psi1, m.Epsi1, m.Epsi3)
    if not all(np.isfinite(vals)):
        raise InvalidParameterError("score moments must be finite")
    return 2.0 * m.Epsi2 * m.Epsi_psi1 - m.Epsi1 * m.Epsi3


# Name used by the published interface.
thm42c_condition = naive_studentization_gap


def score_moments_from_residuals(score: ScoreFunction, residuals) -> ScoreMoments:
    """Plug-in moments from residuals."""
    r = np.asarray(residuals, dtype=np.float64)
    psi, d1 = score.eval(r), score.deriv1(r)
    return ScoreMoments(
        float(np.mean(psi**2)),
        float(np.mean(psi * d1)),
        float(np.mean(d1)),
        float(np.mean(psi**3)),
    )


def score_moments_from_density(score: ScoreFunction, pdf, support=(-np.inf, np.inf)) -> ScoreMoments:
    """Moments by quadrature against an error density ``pdf``."""
    lo, hi = support

    def ex(f):
        return integrate.quad(lambda t: f(t) * pdf(t), lo, hi, limit=200)[0]

    return ScoreMoments(
        ex(lambda t: score.eval(t) ** 2),
        ex(lambda t: score.eval(t) * score.deriv1(t)),
        ex(score.deriv1),
        ex(lambda t: score.eval(t) ** 3),
    )
