"""Score functions psi with analytic first and second derivatives.

Only twice-differentiable scores with a Lipschitz second derivative are
offered; classical Huber and Tukey scores do not qualify.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidParameterError

ArrayFn = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ScoreFunction:
    """A score ``psi`` together with ``psi'`` and ``psi''``.

    The callables are vectorised: they accept scalars or arrays and return
    float arrays of the same shape.
    """

    name: str
    tuning: float
    eval: ArrayFn
    deriv1: ArrayFn
    deriv2: ArrayFn

    @property
    def is_least_squares(self) -> bool:
        return self.name == "ls"

    def scaled(self, c: float) -> "ScoreFunction":
        """The score ``c * psi`` (same estimator, rescaled moments)."""
        if not c > 0:
            raise InvalidParameterError(f"scale must be positive, got {c}")
        f, d1, d2 = self.eval, self.deriv1, self.deriv2
        return ScoreFunction(
            name=f"{self.name}*{c:g}",
            tuning=self.tuning,
            eval=lambda x: c * f(x),
            deriv1=lambda x: c * d1(x),
            deriv2=lambda x: c * d2(x),
        )


def _ls_eval(x):
    return np.asarray(x, dtype=np.float64) * 1.0


def _ls_d1(x):
    return np.ones_like(np.asarray(x, dtype=np.float64))


def _ls_d2(x):
    return np.zeros_like(np.asarray(x, dtype=np.float64))


def make_least_squares() -> ScoreFunction:
    """psi(x) = x, the score of squared-error loss."""
    return ScoreFunction("ls", 1.0, _ls_eval, _ls_d1, _ls_d2)


def make_smooth_huber(c: float) -> ScoreFunction:
    """Pseudo-Huber score ``x / sqrt(1 + x^2/c^2)``.

    Bounded by ``c`` in absolute value, monotone, and infinitely smooth, so it
    is an admissible stand-in for the (non-C2) Huber score.

    Parameters
    ----------
    c : float
        Transition scale; large ``c`` approaches least squares.
    """
    c = float(c)
    if not (np.isfinite(c) and c > 0):
        raise InvalidParameterError(f"pseudo-Huber tuning must be > 0, got {c}")
    inv_c2 = 1.0 / (c * c)

    def psi(x):
        x = np.asarray(x, dtype=np.float64)
        return x / np.sqrt(1.0 + x * x * inv_c2)

    def dpsi(x):
        x = np.asarray(x, dtype=np.float64)
        return (1.0 + x * x * inv_c2) ** -1.5

    def d2psi(x):
        x = np.asarray(x, dtype=np.float64)
        return -3.0 * x * inv_c2 * (1.0 + x * x * inv_c2) ** -2.5

    return ScoreFunction("pseudo-huber", c, psi, dpsi, d2psi)


SCORE_NAMES = ("ls", "pseudo-huber")


def get_score(name: str, tuning: float | None = None) -> ScoreFunction:
    """Look up a built-in score by its CLI/config name."""
    key = name.strip().lower().replace("_", "-")
    if key in ("ls", "least-squares"):
        return make_least_squares()
    if key in ("pseudo-huber", "smooth-huber"):
        return make_smooth_huber(1.345 if tuning is None else tuning)
    raise InvalidParameterError(f"unknown score {name!r}; choose from {SCORE_NAMES}")
