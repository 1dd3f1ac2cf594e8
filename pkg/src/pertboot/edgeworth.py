"""One-term Edgeworth expansions of a scalar pivot.

The expansion is the signed density

    phi(x) * [1 + n^{-1/2} (b11 He1(x) + b31/6 He3(x))]

with probabilists' Hermite polynomials, fixed by ``(-d/dx)^k phi = He_k phi``.
It integrates to one but may dip below zero for large coefficients; such
values are reported as they are, never clipped.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .errors import InvalidParameterError, UnsupportedModelError
from .mest import MFit

CHECK_RANGE = (-4.0, 4.0)


class EdgeworthRangeWarning(UserWarning):
    """The expansion has negative density inside the checked range."""


@dataclass(frozen=True)
class Edgeworth1D:
    b11: float
    b31: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise InvalidParameterError(f"n must be >= 1, got {self.n}")
        if not (math.isfinite(self.b11) and math.isfinite(self.b31)):
            raise InvalidParameterError("coefficients must be finite")

    @property
    def scale(self) -> float:
        return 1.0 / math.sqrt(self.n)

    def correction(self, x):
        """Bracketed polynomial ``1 + n^{-1/2}(b11 x + b31/6 (x^3 - 3x))``."""
        x = np.asarray(x, dtype=np.float64)
        return 1.0 + self.scale * (self.b11 * x + self.b31 / 6.0 * (x**3 - 3.0 * x))

    def negative_region(self, lo: float = CHECK_RANGE[0], hi: float = CHECK_RANGE[1]):
        """Sub-intervals of ``[lo, hi]`` where the density is negative."""
        # correction(x) = 1 + b x + a x^3 is monotone between its critical points.
        a = self.scale * self.b31 / 6.0
        b = self.scale * (self.b11 - 0.5 * self.b31)
        knots = [lo, hi]
        if a != 0 and -b / (3.0 * a) > 0:
            c = math.sqrt(-b / (3.0 * a))
            knots += [v for v in (-c, c) if lo < v < hi]
        knots.sort()
        f = lambda t: float(self.correction(t))
        cuts = [
            brentq(f, left, right, xtol=1e-14)
            for left, right in zip(knots[:-1], knots[1:])
            if f(left) * f(right) < 0
        ]
        edges = [lo, *cuts, hi]
        return [
            (left, right)
            for left, right in zip(edges[:-1], edges[1:])
            if right > left and f(0.5 * (left + right)) < 0
        ]

    def is_monotone(self, lo: float = CHECK_RANGE[0], hi: float = CHECK_RANGE[1]) -> bool:
        return not self.negative_region(lo, hi)


def sufficient_monotone_n(b11: float, b31: float) -> float:
    """Sample size beyond which the density is positive on ``[-4, 4]``.

    On that range ``|x| <= 4`` and ``|x^3 - 3x| <= 52``, so the correction term
    is at most ``n^{-1/2} (4|b11| + 26|b31|/3)`` in absolute value.
    """
    return (4.0 * abs(b11) + 26.0 * abs(b31) / 3.0) ** 2


def _warn_if_negative(e: Edgeworth1D) -> None:
    bad = e.negative_region()
    if bad:
        span = ", ".join(f"[{a:.3g}, {b:.3g}]" for a, b in bad)
        warnings.warn(
            f"Edgeworth density is negative on {span} (b11={e.b11:.3g}, "
            f"b31={e.b31:.3g}, n={e.n})",
            EdgeworthRangeWarning,
            stacklevel=3,
        )


def edgeworth_density(e: Edgeworth1D, x):
    """Signed density of the expansion; scalar in, scalar out."""
    _warn_if_negative(e)
    out = norm.pdf(x) * e.correction(x)
    return float(out) if np.ndim(out) == 0 else out


def edgeworth_cdf(e: Edgeworth1D, x):
    """``Phi(x) - n^{-1/2} phi(x) [b11 + b31/6 (x^2 - 1)]``."""
    _warn_if_negative(e)
    x = np.asarray(x, dtype=np.float64)
    out = norm.cdf(x) - e.scale * norm.pdf(x) * (e.b11 + e.b31 / 6.0 * (x * x - 1.0))
    return float(out) if out.ndim == 0 else out


def _is_location_ls(fit: MFit) -> bool:
    return fit.p == 1 and np.all(fit.data.X == 1.0) and fit.score.is_least_squares


def location_model_coefficients(
    fit: MFit,
    which: str,
    sigma: float | None = None,
    third_moment: float | None = None,
) -> Edgeworth1D:
    """Coefficients of the studentized-mean expansion in the location model.

    ``which="original"`` needs the true error scale ``sigma`` and third moment
    and gives ``b11 = -E e^3 / (2 sigma^3)``, ``b31 = -2 E e^3 / sigma^3``.

    ``which="naive-bootstrap"`` evaluates the naive perturbation-bootstrap
    coefficients from the fit: ``b11 = -2 m / s``, ``b31 = s^-3 - 12 m / s``
    where ``m`` is the mean residual and ``s = sigma_hat``.  With least squares
    ``m`` is zero, so they collapse to ``(0, s^-3)`` whatever the error skewness.
    """
    if not _is_location_ls(fit):
        raise UnsupportedModelError(
            "location-model coefficients need p=1, an all-ones design and least squares"
        )
    if which in ("original", "original-from-F"):
        if sigma is None or third_moment is None:
            raise InvalidParameterError("original coefficients need sigma and third_moment")
        if not sigma > 0:
            raise InvalidParameterError(f"sigma must be positive, got {sigma}")
        k3 = third_moment / sigma**3
        return Edgeworth1D(-0.5 * k3, -2.0 * k3, fit.n)
    if which == "naive-bootstrap":
        s = fit.sigma_hat
        m = float(np.mean(fit.residuals))
        return Edgeworth1D(-2.0 * m / s, s**-3 - 12.0 * m / s, fit.n)
    raise InvalidParameterError(f"unknown coefficient set {which!r}")


def simple_regression_b11(fit: MFit, gamma1: float, j: int) -> float:
    """First-order coefficient for coordinate ``j`` (1 = intercept, 2 = slope)
    of the studentized simple-regression expansion:
    ``-gamma1/2 * mean_i (A_n^{-1/2} x_i)_j``.

    The naive-bootstrap counterpart of this coefficient vanishes in the limit,
    so any ``gamma1 != 0`` separates the two expansions.
    """
    X = fit.data.X
    if fit.p != 2 or not np.all(X[:, 0] == 1.0):
        raise UnsupportedModelError("simple regression needs p=2 with a leading ones column")
    if j not in (1, 2):
        raise InvalidParameterError(f"j must be 1 or 2, got {j}")
    row = fit.A_n_inv_half[j - 1]
    return float(-0.5 * gamma1 * np.mean(X @ row))
