"""Perturbation weight laws and a Monte Carlo check of their moment identities.

Admissible weights are non-negative with ``Var(G) = mu^2`` and
``E(G - mu)^3 = mu^3``.  ``Beta(1/2, 3/2)`` satisfies both with ``mu = 1/4``,
and any positive multiple ``c * Beta(1/2, 3/2)`` keeps them with ``mu = c/4``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np

from . import _rng
from .errors import InvalidParameterError, SchemeValidationError

Sampler = Callable[[np.random.Generator, "int | tuple[int, ...]"], np.ndarray]

BETA_A = Fraction(1, 2)
BETA_B = Fraction(3, 2)


@dataclass(frozen=True)
class Moments:
    mean: float
    variance: float
    third_central: float
    fourth_central: float


@dataclass(frozen=True)
class WeightScheme:
    """Distribution of the perturbation weights ``G*``.

    ``sampler(rng, size)`` must return non-negative draws.  ``moments`` holds
    exact analytic moments for built-in families and may be ``None`` for
    custom samplers.
    """

    family: str
    mu: float
    sampler: Sampler
    moments: Moments | None = None
    scale: float = 1.0

    def draw(self, rng: np.random.Generator, size) -> np.ndarray:
        return np.asarray(self.sampler(rng, size), dtype=np.float64)


def _beta_raw_moment(k: int) -> Fraction:
    out = Fraction(1)
    for j in range(k):
        out *= (BETA_A + j) / (BETA_A + BETA_B + j)
    return out


def _beta_half_moments(c: Fraction) -> Moments:
    m1, m2, m3, m4 = (_beta_raw_moment(k) for k in (1, 2, 3, 4))
    var = m2 - m1**2
    k3 = m3 - 3 * m1 * m2 + 2 * m1**3
    k4 = m4 - 4 * m1 * m3 + 6 * m1**2 * m2 - 3 * m1**4
    return Moments(
        mean=float(c * m1),
        variance=float(c**2 * var),
        third_central=float(c**3 * k3),
        fourth_central=float(c**4 * k4),
    )


def _beta_half_sampler(scale: float) -> Sampler:
    # Gamma(1/2) = Z^2/2 and Gamma(3/2) = Z^2/2 + Exp(1); the ratio is Beta(1/2, 3/2).
    def sample(rng: np.random.Generator, size) -> np.ndarray:
        z1 = rng.standard_normal(size)
        z2 = rng.standard_normal(size)
        e = rng.standard_exponential(size)
        ga = 0.5 * z1 * z1
        gb = 0.5 * z2 * z2 + e
        out = ga / (ga + gb)
        if scale != 1.0:
            out *= scale
        return out

    return sample


def make_beta_half() -> WeightScheme:
    """``Beta(1/2, 3/2)`` weights: mean 1/4, variance 1/16, third central 1/64."""
    return WeightScheme(
        family="beta-half",
        mu=0.25,
        sampler=_beta_half_sampler(1.0),
        moments=_beta_half_moments(Fraction(1)),
        scale=1.0,
    )


def make_scaled_beta_half(c: float = 4.0) -> WeightScheme:
    """``c * Beta(1/2, 3/2)``; the default ``c = 4`` gives unit-mean weights."""
    c = float(c)
    if not (np.isfinite(c) and c > 0):
        raise InvalidParameterError(f"weight scale must be > 0, got {c}")
    if c == 1.0:
        return make_beta_half()
    cf = Fraction(c)
    return WeightScheme(
        family="scaled-beta-half",
        mu=c / 4.0,
        sampler=_beta_half_sampler(c),
        moments=_beta_half_moments(cf),
        scale=c,
    )


def make_custom_scheme(
    sampler: Sampler, mu: float, moments: Moments | None = None
) -> WeightScheme:
    """Wrap a user sampler; ``mu`` is the declared mean of the law."""
    if not mu > 0:
        raise InvalidParameterError(f"mu must be > 0, got {mu}")
    return WeightScheme("custom-sampler", float(mu), sampler, moments)


def get_scheme(name: str, scale: float | None = None) -> WeightScheme:
    key = name.strip().lower()
    if key == "beta-half":
        return make_beta_half()
    if key == "scaled-beta-half":
        return make_scaled_beta_half(4.0 if scale is None else scale)
    raise InvalidParameterError(
        f"unknown weight scheme {name!r}; choose beta-half or scaled-beta-half"
    )


@dataclass(frozen=True)
class MomentCheck:
    name: str
    sample: float
    target: float
    mc_se: float
    passed: bool


@dataclass(frozen=True)
class ValidationReport:
    family: str
    m: int
    checks: tuple[MomentCheck, ...]
    n_negative: int

    @property
    def passed(self) -> bool:
        return self.n_negative == 0 and all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = [f"{self.family} (m={self.m}): {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            lines.append(
                f"  {c.name:<14} sample={c.sample:.6g} target={c.target:.6g} "
                f"se={c.mc_se:.2g} {'PASS' if c.passed else 'FAIL'}"
            )
        return "\n".join(lines)


def validate_scheme(
    scheme: WeightScheme, m: int = 1_000_000, seed: int = 0, n_se: float = 6.0
) -> ValidationReport:
    """Draw ``m`` weights and test mean, variance and third central moment.

    Targets are ``mu``, ``mu^2`` and ``mu^3``.  A moment passes when the sample
    value is within ``n_se`` Monte Carlo standard errors of its target (delta
    method SEs from the sample's own higher central moments).

    Raises
    ------
    SchemeValidationError
        If any draw is negative.
    """
    if m < 10_000:
        raise InvalidParameterError(f"need m >= 1e4 draws, got {m}")
    g = scheme.draw(_rng.stream(seed, _rng.STREAM_VALIDATE), m)
    n_neg = int(np.count_nonzero(g < 0))
    if n_neg:
        raise SchemeValidationError(f"{n_neg} of {m} weight draws are negative")
    mean = float(g.mean())
    d = g - mean
    d2 = d * d
    m2 = float(d2.mean())
    m3 = float((d2 * d).mean())
    m4 = float((d2 * d2).mean())
    m6 = float((d2 * d2 * d2).mean())
    se_mean = np.sqrt(m2 / m)
    se_var = np.sqrt(max(m4 - m2 * m2, 0.0) / m)
    se_k3 = np.sqrt(max(m6 - m3 * m3 - 6.0 * m4 * m2 + 9.0 * m2**3, 0.0) / m)
    mu = scheme.mu
    checks = tuple(
        MomentCheck(name, val, target, se, abs(val - target) <= n_se * se)
        for name, val, target, se in (
            ("mean", mean, mu, se_mean),
            ("variance", m2, mu**2, se_var),
            ("third_central", m3, mu**3, se_k3),
        )
    )
    return ValidationReport(scheme.family, m, checks, n_neg)
