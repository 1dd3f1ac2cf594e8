"""Bootstrap engines: perturbation (four pivots), residual and wild.

All engines work in fixed blocks of replicates.  Replicate ``b`` draws from its
own counter-based stream keyed by ``(seed, engine, b)``, so output is
bit-identical for any thread count.  Replicates that cannot be solved or
studentized are redrawn from the same stream and counted.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import _rng
from ._linalg import batch_inv_sqrtm_sym, inv_sqrtm_sym, sqrtm_sym
from .errors import (
    BootstrapFailure,
    DegenerateStudentizationError,
    InvalidParameterError,
    ReplicateRejected,
    UnsupportedScoreError,
)
from .mest import MFit, RegressionData, SolverOptions
from .perturb import WeightScheme
from .score import ScoreFunction

BLOCK = 256
UNRELIABLE_RATE = 0.01
FAILURE_RATE = 0.10
TRUST_CONST = 10.0
COND_RTOL = 1e-12
DEGENERATE_RTOL = 1e-12

MAMMEN_LOW = (1.0 - math.sqrt(5.0)) / 2.0
MAMMEN_HIGH = (1.0 + math.sqrt(5.0)) / 2.0
MAMMEN_P_LOW = (math.sqrt(5.0) + 1.0) / (2.0 * math.sqrt(5.0))


class PivotKind(str, Enum):
    """The four pivots: standardized, naive, modified and hetero-studentized."""

    F = "f"
    H = "h"
    HTILDE = "htilde"
    HBREVE = "hbreve"

    @property
    def tag(self) -> str:
        return _TAGS[self]

    @classmethod
    def parse(cls, value: "str | PivotKind") -> "PivotKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for kind, tag in _TAGS.items():
            if key in (kind.value, tag.lower()):
                return kind
        raise InvalidParameterError(f"unknown pivot kind {value!r}")


_TAGS = {
    PivotKind.F: "standardized-F",
    PivotKind.H: "naive-studentized-H",
    PivotKind.HTILDE: "modified-studentized-Htilde",
    PivotKind.HBREVE: "hetero-studentized-Hbreve",
}


@dataclass(frozen=True)
class PivotSample:
    """``B`` accepted bootstrap pivots (rows) and the matching estimates."""

    kind: PivotKind
    pivots: np.ndarray
    estimates: np.ndarray
    n_rejected: int
    seed: int
    B_requested: int
    engine: str = "perturb"

    @property
    def B(self) -> int:
        return self.pivots.shape[0]

    @property
    def rejection_rate(self) -> float:
        return self.n_rejected / self.B_requested

    @property
    def unreliable(self) -> bool:
        return self.rejection_rate > UNRELIABLE_RATE


# ---------------------------------------------------------------------------
# perturbation bootstrap
# ---------------------------------------------------------------------------


def trust_radius(fit: MFit) -> float:
    """Radius of the ball around ``beta_bar`` searched for ``beta*``.

    ``10 sqrt(p log n / n) sigma_hat ||A_n^{-1}||^{1/2}``.
    """
    n, p = fit.n, fit.p
    lam_min = float(np.linalg.eigvalsh(fit.A_n)[0])
    return (
        TRUST_CONST
        * math.sqrt(p * math.log(n) / n)
        * fit.sigma_hat
        / math.sqrt(lam_min)
    )


def _batch_gram(X: np.ndarray, w: np.ndarray) -> np.ndarray:
    """``sum_i w_bi x_i x_i'`` for each row ``b`` of ``w``; shape (B, p, p)."""
    return np.einsum("bi,ij,ik->bjk", w, X, X, optimize=False)


def _well_conditioned(gram: np.ndarray) -> np.ndarray:
    ev = np.linalg.eigvalsh(gram)
    top = ev[:, -1]
    return np.isfinite(top) & (top > 0) & (ev[:, 0] > COND_RTOL * top)


def _solve_perturbed(
    fit: MFit,
    W: np.ndarray,
    method: str = "auto",
    radius: float | None = None,
    opts: SolverOptions | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Solve the weighted estimating equation for every row of ``W``.

    Returns ``(betas, ok)``.  Rows with ``ok`` False were rejected (singular
    weighted design, no convergence, or left the trust region).
    """
    opts = opts or SolverOptions()
    data, score = fit.data, fit.score
    X, y = data.X, data.y
    n = data.n
    B = W.shape[0]
    beta0 = fit.beta_bar
    radius = trust_radius(fit) if radius is None else radius
    tol = opts.tol * fit.eq_scale * W.mean(axis=1)
    if method == "auto":
        method = "ls" if score.is_least_squares else "newton"
    if method == "ls" and not score.is_least_squares:
        raise UnsupportedScoreError("closed-form path requires the least-squares score")

    betas = np.repeat(beta0[None, :], B, axis=0)
    gram = _batch_gram(X, W)
    ok = _well_conditioned(gram)

    if method == "ls":
        # One exact Newton step from beta_bar: the weighted normal equations.
        rhs = (W * fit.residuals[None, :]) @ X
        need = ok & (np.linalg.norm(rhs / n, axis=1) > tol)
        if need.any():
            betas[need] += np.linalg.solve(gram[need], rhs[need][..., None])[..., 0]
    elif method == "newton":
        betas, ok = _newton_batch(X, y, W, score, betas, ok, tol, radius, beta0, opts)
    else:
        raise InvalidParameterError(f"unknown solver method {method!r}")

    dist = np.linalg.norm(betas - beta0[None, :], axis=1)
    ok &= np.isfinite(dist) & (dist <= radius)
    return betas, ok


def _newton_batch(X, y, W, score, betas, ok, tol, radius, beta0, opts):
    n = X.shape[0]

    def eq(rows, b):
        r = y[None, :] - b @ X.T
        return r, (score.eval(r) * W[rows]) @ X / n

    alive = ok.copy()
    done = np.zeros_like(ok)
    idx = np.flatnonzero(alive)
    r, g = eq(idx, betas[idx])
    norms = np.full(W.shape[0], np.inf)
    norms[idx] = np.linalg.norm(g, axis=1)
    for _ in range(opts.max_iter + 1):
        done |= alive & (norms <= tol)
        act = np.flatnonzero(alive & ~done)
        if act.size == 0:
            break
        r, g = eq(act, betas[act])
        wd = score.deriv1(r) * W[act]
        J = np.einsum("bi,ij,ik->bjk", wd, X, X, optimize=False) / n
        try:
            step = np.linalg.solve(J, g[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = np.full_like(g, np.nan)
            for k in range(act.size):
                try:
                    step[k] = np.linalg.solve(J[k], g[k])
                except np.linalg.LinAlgError:
                    pass
        bad = ~np.isfinite(step).all(axis=1)
        alive[act[bad]] = False
        t = np.ones(act.size)
        pending = ~bad
        new_beta = betas[act].copy()
        new_norm = norms[act].copy()
        for _h in range(opts.max_halvings + 1):
            rows = np.flatnonzero(pending)
            if rows.size == 0:
                break
            trial = betas[act[rows]] + t[rows, None] * step[rows]
            _, g_t = eq(act[rows], trial)
            nt = np.linalg.norm(g_t, axis=1)
            acc = nt < norms[act[rows]]
            new_beta[rows[acc]] = trial[acc]
            new_norm[rows[acc]] = nt[acc]
            pending[rows[acc]] = False
            t[rows[~acc]] *= 0.5
        alive[act[pending]] = False
        moved = ~pending & ~bad
        betas[act[moved]] = new_beta[moved]
        norms[act[moved]] = new_norm[moved]
        far = np.linalg.norm(betas[act] - beta0[None, :], axis=1) > radius
        alive[act[far]] = False
    return betas, alive & done


def _perturb_pivots(
    fit: MFit,
    betas: np.ndarray,
    W: np.ndarray,
    mu: float,
    kinds: tuple[PivotKind, ...],
) -> tuple[dict[PivotKind, np.ndarray], np.ndarray]:
    """All requested pivots for a batch of solved replicates."""
    data, score = fit.data, fit.score
    X, y = data.X, data.y
    n = data.n
    root_n = math.sqrt(n)
    D = betas - fit.beta_bar[None, :]
    ok = np.ones(betas.shape[0], dtype=bool)
    out: dict[PivotKind, np.ndarray] = {}
    F = root_n * D @ fit.sigma_half_inv.T
    E = y[None, :] - betas @ X.T
    psi = score.eval(E)
    psi2 = psi * psi
    # Studentizers this far below their sample counterparts are zero up to rounding.
    floor = DEGENERATE_RTOL**2 * fit.s_n2
    with np.errstate(divide="ignore", invalid="ignore"):
        if PivotKind.F in kinds:
            out[PivotKind.F] = F
        if PivotKind.H in kinds:
            tau = score.deriv1(E).mean(axis=1)
            s2 = psi2.mean(axis=1)
            good = (tau > 0) & (s2 > floor)
            sig = np.sqrt(s2) / tau
            out[PivotKind.H] = F * (fit.sigma_hat / sig)[:, None]
            ok &= good
        dev2 = (W - mu) ** 2
        if PivotKind.HTILDE in kinds:
            tau_t = (score.deriv1(E) * W).mean(axis=1)
            s2_t = (psi2 * dev2).mean(axis=1)
            good = (tau_t > 0) & (s2_t > floor * mu * mu)
            sig_t = np.sqrt(s2_t) / tau_t
            out[PivotKind.HTILDE] = F * (fit.sigma_hat / sig_t)[:, None]
            ok &= good
        if PivotKind.HBREVE in kinds:
            A1 = _batch_gram(X, score.deriv1(E) * W) / n
            A2 = _batch_gram(X, psi2 * dev2) / n
            roots, good = batch_inv_sqrtm_sym(A2)
            good &= np.trace(A2, axis1=1, axis2=2) > floor * mu * mu * np.trace(fit.A2_bar)
            S = np.matmul(roots, A1)
            out[PivotKind.HBREVE] = root_n * np.einsum("bjk,bk->bj", S, D)
            ok &= good
    for arr in out.values():
        ok &= np.isfinite(arr).all(axis=1)
    return out, ok


def _check_weights(weights: np.ndarray, n: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise InvalidParameterError(f"weights must have shape ({n},), got {w.shape}")
    if (w < 0).any() or not np.isfinite(w).all() or not (w > 0).any():
        raise InvalidParameterError("weights must be finite, >= 0 and not all zero")
    return w


def perturb_replicate(
    data: RegressionData,
    score: ScoreFunction,
    fit: MFit,
    weights: np.ndarray,
    *,
    method: str = "auto",
    radius: float | None = None,
) -> np.ndarray:
    """Solve ``sum_i x_i psi(y_i - x_i' b) G_i = 0`` for one weight vector.

    ``method`` is ``"ls"`` (weighted normal equations), ``"newton"`` (damped
    Newton from ``beta_bar``) or ``"auto"``.

    Raises
    ------
    ReplicateRejected
        If the weighted design is singular, Newton fails, or the solution is
        outside the trust region around ``beta_bar``.
    """
    _same_problem(data, score, fit)
    w = _check_weights(weights, data.n)
    betas, ok = _solve_perturbed(fit, w[None, :], method=method, radius=radius)
    if not ok[0]:
        raise ReplicateRejected("perturbation replicate could not be solved")
    return betas[0]


def perturb_pivot(
    data: RegressionData,
    score: ScoreFunction,
    fit: MFit,
    weights: np.ndarray,
    scheme: WeightScheme,
    kind: "PivotKind | str",
    *,
    method: str = "auto",
) -> np.ndarray:
    """Bootstrap pivot of the given kind for one weight vector.

    ``scheme.mu`` must be the mean of the law that produced ``weights``; it
    enters the modified and heteroscedastic studentizations through
    ``(G_i - mu)^2``.
    """
    kind = PivotKind.parse(kind)
    fit.require_studentizable()
    beta = perturb_replicate(data, score, fit, weights, method=method)
    w = np.asarray(weights, dtype=np.float64)
    piv, ok = _perturb_pivots(fit, beta[None, :], w[None, :], scheme.mu, (kind,))
    if not ok[0]:
        raise ReplicateRejected(f"{kind.tag} studentization is degenerate")
    return piv[kind][0]


def _same_problem(data: RegressionData, score: ScoreFunction, fit: MFit) -> None:
    if data is not fit.data and not (
        np.array_equal(data.X, fit.data.X) and np.array_equal(data.y, fit.data.y)
    ):
        raise InvalidParameterError("fit was computed on different data")
    if score is not fit.score and score.name != fit.score.name:
        raise InvalidParameterError("fit was computed with a different score")


def _run_blocks(B: int, n_threads: int | None, block_fn):
    starts = list(range(0, B, BLOCK))
    n_threads = n_threads or _rng.default_threads()
    if n_threads <= 1 or len(starts) == 1:
        return [block_fn(s, min(s + BLOCK, B)) for s in starts]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        return list(pool.map(lambda s: block_fn(s, min(s + BLOCK, B)), starts))


def _max_rejections(B: int) -> int:
    return int(math.floor(FAILURE_RATE * B))


def _redraw_loop(B, lo, hi, draw, evaluate, cap):
    """Draw, evaluate and redraw rejected rows of one block.

    ``draw(b, rng)`` returns the raw randomness for replicate ``b``;
    ``evaluate(raw_stack)`` returns ``(results: dict[str, array], ok)``.
    """
    rngs = [None] * (hi - lo)
    raws = []
    for j, b in enumerate(range(lo, hi)):
        rngs[j] = draw.rng(b)
        raws.append(draw(rngs[j]))
    raws = np.stack(raws)
    results, ok = evaluate(raws)
    rejected = 0
    while not ok.all():
        bad = np.flatnonzero(~ok)
        rejected += bad.size
        if rejected > cap:
            raise BootstrapFailure(
                f"more than {FAILURE_RATE:.0%} of {B} replicates rejected"
            )
        fresh = np.stack([draw(rngs[j]) for j in bad])
        sub, sub_ok = evaluate(fresh)
        raws[bad] = fresh
        for key in results:
            results[key][bad] = sub[key]
        ok[bad] = sub_ok
    return results, rejected


class _Drawer:
    def __init__(self, seed: int, tag: int, fn):
        self.seed, self.tag, self.fn = seed, tag, fn

    def rng(self, b: int) -> np.random.Generator:
        return _rng.stream(self.seed, self.tag, b)

    def __call__(self, rng):
        return self.fn(rng)


def _collect(blocks, B):
    keys = blocks[0][0].keys()
    merged = {k: np.concatenate([blk[0][k] for blk in blocks]) for k in keys}
    rejected = sum(blk[1] for blk in blocks)
    if rejected > _max_rejections(B):
        raise BootstrapFailure(
            f"{rejected} of {B} replicates rejected (> {FAILURE_RATE:.0%})"
        )
    return merged, rejected


def perturbation_bootstrap_multi(
    data: RegressionData,
    score: ScoreFunction,
    fit: MFit,
    scheme: WeightScheme,
    kinds,
    B: int,
    seed: int,
    *,
    n_threads: int | None = None,
    method: str = "auto",
) -> dict[PivotKind, PivotSample]:
    """Several pivot kinds computed from one common set of weight draws."""
    _same_problem(data, score, fit)
    if B < 1:
        raise InvalidParameterError(f"B must be >= 1, got {B}")
    fit.require_studentizable()
    kinds = tuple(PivotKind.parse(k) for k in kinds)
    n = data.n
    radius = trust_radius(fit)
    drawer = _Drawer(seed, _rng.STREAM_PERTURB, lambda rng: scheme.draw(rng, n))
    cap = _max_rejections(B)

    def evaluate(W):
        betas, ok = _solve_perturbed(fit, W, method=method, radius=radius)
        res = {"beta": betas}
        if ok.any():
            piv, ok2 = _perturb_pivots(fit, betas[ok], W[ok], scheme.mu, kinds)
            sub = np.flatnonzero(ok)
            for k in kinds:
                full = np.full_like(betas, np.nan)
                full[sub] = piv[k]
                res[k] = full
            ok[sub] &= ok2
        else:
            for k in kinds:
                res[k] = np.full_like(betas, np.nan)
        return res, ok

    blocks = _run_blocks(
        B, n_threads, lambda lo, hi: _redraw_loop(B, lo, hi, drawer, evaluate, cap)
    )
    merged, rejected = _collect(blocks, B)
    return {
        k: PivotSample(k, merged[k], merged["beta"], rejected, seed, B, "perturb")
        for k in kinds
    }


def run_perturbation_bootstrap(
    data: RegressionData,
    score: ScoreFunction,
    fit: MFit,
    scheme: WeightScheme,
    kind: "PivotKind | str",
    B: int,
    seed: int,
    *,
    n_threads: int | None = None,
    method: str = "auto",
) -> PivotSample:
    """Perturbation bootstrap distribution of one pivot kind.

    Rejected replicates are redrawn so exactly ``B`` rows are returned.  More
    than 1% rejections marks the sample unreliable; more than 10% raises
    :class:`BootstrapFailure`.  A degenerate fit raises
    :class:`DegenerateStudentizationError`.
    """
    kind = PivotKind.parse(kind)
    return perturbation_bootstrap_multi(
        data, score, fit, scheme, (kind,), B, seed, n_threads=n_threads, method=method
    )[kind]


# ---------------------------------------------------------------------------
# residual bootstrap
# ---------------------------------------------------------------------------


def residual_replicate(
    data: RegressionData, score: ScoreFunction, fit: MFit, index: np.ndarray
) -> np.ndarray:
    """Refit on ``y** = X beta_bar + e[index]`` with centered residuals ``e``."""
    from .mest import m_estimate

    _same_problem(data, score, fit)
    e = fit.residuals - fit.residuals.mean()
    y_star = data.X @ fit.beta_bar + e[np.asarray(index)]
    if score.is_least_squares:
        return fit.beta_bar + np.linalg.lstsq(data.X, y_star - data.X @ fit.beta_bar,
                                              rcond=None)[0]
    return m_estimate(data.with_response(y_star), score).beta_bar


def residual_bootstrap_covariance(fit: MFit) -> np.ndarray:
    """Exact conditional covariance of the least-squares residual-bootstrap
    estimate: ``mean((e - e_bar)^2) (X'X)^{-1}``."""
    if not fit.score.is_least_squares:
        raise UnsupportedScoreError("exact covariance is available for least squares only")
    e = fit.residuals - fit.residuals.mean()
    X = fit.data.X
    return float(np.mean(e * e)) * np.linalg.inv(X.T @ X)


def run_residual_bootstrap(
    data: RegressionData,
    score: ScoreFunction,
    fit: MFit,
    B: int,
    seed: int,
    *,
    n_threads: int | None = None,
) -> PivotSample:
    """Residual bootstrap with naive studentization.

    Each replicate resamples centered residuals, refits, and returns
    ``sqrt(n) sigma_hat**^{-1} A_n^{1/2} (beta** - beta_bar)`` where
    ``sigma_hat**`` is recomputed from the refit's residuals.
    """
    _same_problem(data, score, fit)
    if B < 1:
        raise InvalidParameterError(f"B must be >= 1, got {B}")
    fit.require_studentizable()
    X = data.X
    n = data.n
    root_n = math.sqrt(n)
    e = fit.residuals - fit.residuals.mean()
    drawer = _Drawer(seed, _rng.STREAM_RESIDUAL, lambda rng: rng.integers(0, n, size=n))
    cap = _max_rejections(B)
    XtX = X.T @ X
    A_half = fit.A_n_half

    def evaluate(idx):
        E = e[idx]
        if score.is_least_squares:
            betas = fit.beta_bar[None, :] + np.linalg.solve(XtX, (E @ X).T).T
        else:
            betas = np.empty((idx.shape[0], data.p))
            for k in range(idx.shape[0]):
                betas[k] = _m_refit(data, score, fit.beta_bar, E[k])
        D = betas - fit.beta_bar[None, :]
        R = E - D @ X.T
        with np.errstate(divide="ignore", invalid="ignore"):
            psi = score.eval(R)
            tau = score.deriv1(R).mean(axis=1)
            s2 = (psi * psi).mean(axis=1)
            sig = np.sqrt(s2) / tau
            piv = root_n * (D @ A_half.T) / sig[:, None]
        ok = np.isfinite(piv).all(axis=1) & (tau > 0) & (s2 > DEGENERATE_RTOL**2 * fit.s_n2)
        return {"beta": betas, "pivot": piv}, ok

    blocks = _run_blocks(
        B, n_threads, lambda lo, hi: _redraw_loop(B, lo, hi, drawer, evaluate, cap)
    )
    merged, rejected = _collect(blocks, B)
    return PivotSample(
        PivotKind.H, merged["pivot"], merged["beta"], rejected, seed, B, "residual"
    )


def _m_refit(data, score, beta_bar, e_star):
    from .errors import NonConvergenceError
    from .mest import m_estimate

    try:
        return m_estimate(data.with_response(data.X @ beta_bar + e_star), score).beta_bar
    except (NonConvergenceError, DegenerateStudentizationError):
        return np.full(data.p, np.nan)


# ---------------------------------------------------------------------------
# wild bootstrap
# ---------------------------------------------------------------------------


def mammen_draws(rng: np.random.Generator, size) -> np.ndarray:
    """Two-point law with mean 0, variance 1 and third moment 1."""
    u = rng.random(size)
    return np.where(u < MAMMEN_P_LOW, MAMMEN_LOW, MAMMEN_HIGH)


def wild_replicate(data: RegressionData, fit: MFit, t: np.ndarray) -> np.ndarray:
    """Least-squares refit on ``y* = X beta_hat + e_hat * t``."""
    if not fit.score.is_least_squares:
        raise UnsupportedScoreError("wild bootstrap requires the least-squares score")
    X = data.X
    rhs = X.T @ (fit.residuals * np.asarray(t, dtype=np.float64))
    return fit.beta_bar + np.linalg.solve(X.T @ X, rhs)


def run_wild_bootstrap(
    data: RegressionData,
    fit: MFit,
    B: int,
    seed: int,
    *,
    n_threads: int | None = None,
) -> PivotSample:
    """Wild bootstrap (Mammen multipliers) with heteroscedastic studentization.

    Pivot: ``sqrt(n) A2*^{-1/2} A_n (beta* - beta_hat)`` where ``A2*`` is built
    from the squared residuals of each wild refit.
    """
    if not fit.score.is_least_squares:
        raise UnsupportedScoreError("wild bootstrap requires the least-squares score")
    if B < 1:
        raise InvalidParameterError(f"B must be >= 1, got {B}")
    fit.require_studentizable()
    X = data.X
    n = data.n
    root_n = math.sqrt(n)
    XtX = X.T @ X
    drawer = _Drawer(seed, _rng.STREAM_WILD, lambda rng: mammen_draws(rng, n))
    cap = _max_rejections(B)

    def evaluate(T):
        E = fit.residuals[None, :] * T
        D = np.linalg.solve(XtX, (E @ X).T).T
        R = E - D @ X.T
        A2 = _batch_gram(X, R * R) / n
        roots, ok = batch_inv_sqrtm_sym(A2)
        piv = root_n * np.einsum("bjk,kl,bl->bj", roots, fit.A_n, D)
        ok &= np.isfinite(piv).all(axis=1)
        return {"beta": fit.beta_bar[None, :] + D, "pivot": piv}, ok

    blocks = _run_blocks(
        B, n_threads, lambda lo, hi: _redraw_loop(B, lo, hi, drawer, evaluate, cap)
    )
    merged, rejected = _collect(blocks, B)
    return PivotSample(
        PivotKind.HBREVE, merged["pivot"], merged["beta"], rejected, seed, B, "wild"
    )


# ---------------------------------------------------------------------------
# confidence intervals
# ---------------------------------------------------------------------------


class QuantileExtrapolationWarning(UserWarning):
    """Requested tail probability is finer than the bootstrap sample resolves."""


def unstandardize(fit: MFit, kind: "PivotKind | str") -> tuple[np.ndarray, float]:
    """``(R, c)`` with ``sqrt(n) (beta_bar - beta) = c R T`` for original pivot ``T``.

    * F, H, Htilde: ``R = A_n^{-1/2}``, ``c = sigma_hat`` (for F the unknown
      sigma is replaced by ``sigma_hat``).
    * Hbreve: ``R = A1_bar^{-1} A2_bar^{1/2}``, ``c = 1``.
    """
    kind = PivotKind.parse(kind)
    fit.require_studentizable()
    if kind is PivotKind.HBREVE:
        return np.linalg.solve(fit.A1_bar, sqrtm_sym(fit.A2_bar, "A2_bar")), 1.0
    return fit.A_n_inv_half, fit.sigma_hat


def standard_errors(fit: MFit, kind: "PivotKind | str") -> np.ndarray:
    """Per-coordinate standard errors of ``sqrt(n) beta_bar`` implied by ``kind``."""
    R, c = unstandardize(fit, kind)
    return c * np.sqrt(np.einsum("ij,ij->i", R, R))


def coordinate_tstats(fit: MFit, pivots: np.ndarray, kind) -> np.ndarray:
    """Map pivot rows to per-coordinate t-statistics ``(R T)_j / ||R_j||``."""
    R, _ = unstandardize(fit, kind)
    norms = np.sqrt(np.einsum("ij,ij->i", R, R))
    return (np.atleast_2d(pivots) @ R.T) / norms[None, :]


def bootstrap_ci(
    sample: PivotSample, fit: MFit, level: float = 0.95, kind=None
) -> np.ndarray:
    """Pivot-percentile intervals, one row ``(lower, upper)`` per coordinate.

    Pivots are mapped to coordinate t-statistics ``t_j`` (see
    :func:`coordinate_tstats`); with ``se_j`` from :func:`standard_errors`,
    the interval is ``beta_bar_j - q(1 - a/2) se_j / sqrt(n)`` to
    ``beta_bar_j - q(a/2) se_j / sqrt(n)`` where ``q`` are empirical quantiles
    of ``t_j``.
    """
    if not 0.0 < level < 1.0:
        raise InvalidParameterError(f"level must be in (0, 1), got {level}")
    if sample.B < 100:
        raise InvalidParameterError(f"need at least 100 pivots for an interval, got {sample.B}")
    kind = sample.kind if kind is None else PivotKind.parse(kind)
    alpha = 1.0 - level
    if sample.B * alpha / 2.0 < 1.0:
        warnings.warn(
            f"B={sample.B} cannot resolve tail probability {alpha / 2:.2g}; "
            "quantiles are extrapolated",
            QuantileExtrapolationWarning,
            stacklevel=2,
        )
    t = coordinate_tstats(fit, sample.pivots, kind)
    q_lo, q_hi = np.quantile(t, [alpha / 2.0, 1.0 - alpha / 2.0], axis=0)
    half = standard_errors(fit, kind) / math.sqrt(fit.n)
    return np.column_stack([fit.beta_bar - q_hi * half, fit.beta_bar - q_lo * half])


def pivot_quantiles(sample: PivotSample, probs=(0.025, 0.05, 0.5, 0.95, 0.975)):
    """Empirical per-coordinate quantiles of the raw pivots, shape (len(probs), p)."""
    return np.quantile(sample.pivots, np.asarray(probs), axis=0)
