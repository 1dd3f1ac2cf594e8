"""Monte Carlo harness comparing bootstrap approximations with the sampling
distribution of the original pivots.

A scenario fixes a design and an error law.  ``M`` datasets are drawn to
estimate the sampling law of the studentized pivots; on the first ``n_outer``
of them every bootstrap method is run with ``B`` replicates.  Each method is
scored by its sup-distance to that truth over half-lines per coordinate (and
axis-aligned rectangles on a 20 x 20 quantile grid when ``p = 2``), and by
confidence-interval coverage of ``beta_true``.

Every random quantity is keyed by ``(seed, stream, index)``, so methods share
datasets (paired comparisons) and results do not depend on thread count.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import norm

from . import _rng
from ._linalg import batch_inv_sqrtm_sym
from .boot import (
    PivotKind,
    bootstrap_ci,
    perturbation_bootstrap_multi,
    run_residual_bootstrap,
    run_wild_bootstrap,
    standard_errors,
)
from .errors import InvalidParameterError, PertbootError
from .mest import (
    MFit,
    RegressionData,
    m_estimate,
    pivot_original_hetero,
    pivot_original_studentized,
)
from .perturb import WeightScheme, get_scheme
from .score import ScoreFunction, get_score

METHODS = (
    "normal-approx",
    "perturb-naive",
    "perturb-modified",
    "perturb-hetero",
    "residual",
    "wild",
)
_PERTURB_KIND = {
    "perturb-naive": PivotKind.H,
    "perturb-modified": PivotKind.HTILDE,
    "perturb-hetero": PivotKind.HBREVE,
}
# Which original pivot each method approximates.
_TARGET = {
    "normal-approx": "h",
    "perturb-naive": "h",
    "perturb-modified": "h",
    "perturb-hetero": "hbreve",
    "residual": "h",
    "wild": "hbreve",
}
DESIGNS = ("ones", "gaussian", "uniform", "fixed-csv")
_DESIGN_ALIASES = {"example31-gaussian": "gaussian"}
ERROR_LAWS = ("normal", "centered-exponential", "scaled-t", "hetero")
DATA_CHUNK = 1024
GRID_CELLS = 20
N_MCSE_RESAMPLES = 500
MIN_M = 100
MIN_B = 200


# ---------------------------------------------------------------------------
# scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DesignSpec:
    """How the fixed design is generated.

    ``ones`` is the location model (p = 1).  ``gaussian`` has IID
    standard normal entries, ``uniform`` IID ``U(low, high)`` entries;
    ``intercept`` replaces the first column by ones.  ``fixed-csv`` reads every
    column of ``path``.
    """

    kind: str = "ones"
    intercept: bool = False
    low: float = 1.0
    high: float = 2.0
    path: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", _DESIGN_ALIASES.get(self.kind, self.kind))
        if self.kind not in DESIGNS:
            raise InvalidParameterError(f"unknown design {self.kind!r}; choose from {DESIGNS}")
        if self.kind == "uniform" and not self.low < self.high:
            raise InvalidParameterError("uniform design needs low < high")
        if self.kind == "fixed-csv" and not self.path:
            raise InvalidParameterError("fixed-csv design needs a path")

    def build(self, n: int, p: int, seed: int) -> np.ndarray:
        rng = _rng.stream(seed, _rng.STREAM_DESIGN)
        if self.kind == "ones":
            if p != 1:
                raise InvalidParameterError("the ones design has p = 1")
            return np.ones((n, 1))
        if self.kind == "fixed-csv":
            from .io import load_design_csv

            X = load_design_csv(self.path)
            if X.shape != (n, p):
                raise InvalidParameterError(
                    f"design file has shape {X.shape}, scenario asks for ({n}, {p})"
                )
            return X
        if self.kind == "gaussian":
            X = rng.standard_normal((n, p))
        else:
            X = rng.uniform(self.low, self.high, size=(n, p))
        if self.intercept:
            X[:, 0] = 1.0
        return X


@dataclass(frozen=True)
class ErrorLaw:
    """Error distribution; every law has mean zero.

    * ``normal``: ``N(0, sigma^2)``
    * ``centered-exponential``: ``Exp(rate) - 1/rate``
    * ``scaled-t``: ``sigma * t_df * sqrt((df - 2) / df)`` (variance ``sigma^2``)
    * ``hetero``: ``s_i * N(0, 1)`` with ``s_i = a + b ||x_i||`` or given ``sigmas``
    """

    kind: str = "normal"
    sigma: float = 1.0
    rate: float = 1.0
    df: float = 5.0
    a: float = 0.5
    b: float = 1.0
    sigmas: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in ERROR_LAWS:
            raise InvalidParameterError(f"unknown error law {self.kind!r}; choose from {ERROR_LAWS}")
        if self.sigma <= 0 or self.rate <= 0:
            raise InvalidParameterError("sigma and rate must be positive")
        if self.kind == "scaled-t" and self.df <= 2:
            raise InvalidParameterError("scaled-t needs df > 2")

    @property
    def symmetric(self) -> bool:
        return self.kind != "centered-exponential"

    @property
    def third_moment(self) -> float:
        return 2.0 / self.rate**3 if self.kind == "centered-exponential" else 0.0

    @property
    def homoscedastic_sigma(self) -> float:
        if self.kind == "centered-exponential":
            return 1.0 / self.rate
        if self.kind == "hetero":
            raise InvalidParameterError("heteroscedastic law has no common sigma")
        return self.sigma

    def scales(self, X: np.ndarray) -> np.ndarray:
        """Per-observation standard deviations."""
        n = X.shape[0]
        if self.kind == "hetero":
            if self.sigmas is not None:
                s = np.asarray(self.sigmas, dtype=np.float64)
                if s.shape != (n,) or (s <= 0).any():
                    raise InvalidParameterError(f"sigmas must be {n} positive values")
                return s
            return self.a + self.b * np.linalg.norm(X, axis=1)
        return np.full(n, self.homoscedastic_sigma)

    def sample(self, rng: np.random.Generator, X: np.ndarray, m: int) -> np.ndarray:
        """``m`` independent error vectors, shape ``(m, n)``."""
        n = X.shape[0]
        if self.kind == "normal":
            return self.sigma * rng.standard_normal((m, n))
        if self.kind == "centered-exponential":
            return (rng.standard_exponential((m, n)) - 1.0) / self.rate
        if self.kind == "scaled-t":
            return self.sigma * math.sqrt((self.df - 2.0) / self.df) * rng.standard_t(
                self.df, (m, n)
            )
        return self.scales(X)[None, :] * rng.standard_normal((m, n))


@dataclass(frozen=True)
class Scenario:
    n: int
    p: int = 1
    design: DesignSpec = field(default_factory=DesignSpec)
    errors: ErrorLaw = field(default_factory=ErrorLaw)
    score_name: str = "ls"
    score_tuning: float | None = None
    scheme_name: str = "scaled-beta-half"
    scheme_scale: float | None = None
    beta_true: tuple[float, ...] | None = None
    M: int = 20_000
    B: int = 2_000
    n_outer: int = 50
    level: float = 0.95
    seed: int = 0
    methods: tuple[str, ...] = METHODS

    def __post_init__(self):
        if self.n <= self.p or self.p < 1:
            raise InvalidParameterError(f"need n > p >= 1, got n={self.n}, p={self.p}")
        if self.M < MIN_M:
            raise InvalidParameterError(f"M must be >= {MIN_M}, got {self.M}")
        if self.B < MIN_B:
            raise InvalidParameterError(f"B must be >= {MIN_B}, got {self.B}")
        if not 1 <= self.n_outer <= self.M:
            raise InvalidParameterError("n_outer must be in [1, M]")
        if not 0 < self.level < 1:
            raise InvalidParameterError("level must be in (0, 1)")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise InvalidParameterError(f"unknown methods {bad}; choose from {METHODS}")
        if self.beta_true is not None and len(self.beta_true) != self.p:
            raise InvalidParameterError(f"beta_true must have {self.p} entries")
        score = self.score
        if not score.is_least_squares and not self.errors.symmetric:
            # E psi(e) = 0 is only guaranteed for odd psi and symmetric errors.
            raise InvalidParameterError(
                "a robust score needs a symmetric error law so that E psi(e) = 0"
            )
        if "wild" in self.methods and not score.is_least_squares:
            raise InvalidParameterError("the wild bootstrap needs the least-squares score")

    @property
    def score(self) -> ScoreFunction:
        return get_score(self.score_name, self.score_tuning)

    @property
    def scheme(self) -> WeightScheme:
        return get_scheme(self.scheme_name, self.scheme_scale)

    @property
    def beta(self) -> np.ndarray:
        if self.beta_true is None:
            return np.ones(self.p)
        return np.asarray(self.beta_true, dtype=np.float64)

    def design_matrix(self) -> np.ndarray:
        return self.design.build(self.n, self.p, self.seed)

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# data and truth
# ---------------------------------------------------------------------------


def error_block(s: Scenario, X: np.ndarray, chunk: int) -> np.ndarray:
    """Errors for datasets ``chunk * DATA_CHUNK ...``; one stream per chunk."""
    rng = _rng.stream(s.seed, _rng.STREAM_DATA, chunk)
    return s.errors.sample(rng, X, DATA_CHUNK)


def dataset(s: Scenario, X: np.ndarray, m: int) -> RegressionData:
    """The ``m``-th Monte Carlo dataset."""
    e = error_block(s, X, m // DATA_CHUNK)[m % DATA_CHUNK]
    return RegressionData(X, X @ s.beta + e)


def _ls_truth(X, E, n):
    XtX = X.T @ X
    D = np.linalg.solve(XtX, (E @ X).T).T
    R = E - D @ X.T
    sig = np.sqrt(np.mean(R * R, axis=1))
    A = XtX / n
    from ._linalg import sqrtm_sym

    A_half = sqrtm_sym(A, "A_n")
    H = math.sqrt(n) * (D @ A_half.T) / sig[:, None]
    A2 = np.einsum("bi,ij,ik->bjk", R * R, X, X) / n
    roots, ok = batch_inv_sqrtm_sym(A2)
    Hb = math.sqrt(n) * np.einsum("bjk,kl,bl->bj", roots, A, D)
    ok &= (sig > 0) & np.isfinite(H).all(axis=1)
    return H, Hb, ok


def _general_truth(X, E, beta, score):
    H = np.full((E.shape[0], X.shape[1]), np.nan)
    Hb = H.copy()
    ok = np.zeros(E.shape[0], dtype=bool)
    base = RegressionData(X, X @ beta)
    for k in range(E.shape[0]):
        try:
            fit = m_estimate(base.with_response(base.y + E[k]), score)
            H[k] = pivot_original_studentized(fit, beta)
            Hb[k] = pivot_original_hetero(fit, beta)
            ok[k] = True
        except PertbootError:
            pass
    return H, Hb, ok


@dataclass
class Truth:
    """Sampling draws of the original pivots."""

    h: np.ndarray
    hbreve: np.ndarray
    n_dropped: int


def original_pivot_draws(s: Scenario, X: np.ndarray, n_threads: int | None = None) -> Truth:
    """``M`` draws of the studentized and hetero-studentized original pivots."""
    score = s.score
    n_chunks = -(-s.M // DATA_CHUNK)

    def chunk(c):
        E = error_block(s, X, c)[: min(DATA_CHUNK, s.M - c * DATA_CHUNK)]
        if score.is_least_squares:
            return _ls_truth(X, E, s.n)
        return _general_truth(X, E, s.beta, score)

    parts = _map(chunk, range(n_chunks), n_threads)
    ok = np.concatenate([p[2] for p in parts])
    h = np.concatenate([p[0] for p in parts])[ok]
    hb = np.concatenate([p[1] for p in parts])[ok]
    return Truth(h, hb, int((~ok).sum()))


def _map(fn, items, n_threads):
    items = list(items)
    n_threads = n_threads or _rng.default_threads()
    if n_threads <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# distances
# ---------------------------------------------------------------------------


def ks_two_sample(a: np.ndarray, b: np.ndarray) -> float:
    """Sup over half-lines of the difference between two empirical CDFs."""
    a = np.sort(a)
    b = np.sort(b)
    pts = np.concatenate([a, b])
    fa = np.searchsorted(a, pts, side="right") / a.size
    fb = np.searchsorted(b, pts, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_normal(a: np.ndarray) -> float:
    """Kolmogorov distance between the sample and ``N(0, 1)``."""
    a = np.sort(a)
    m = a.size
    cdf = norm.cdf(a)
    hi = np.arange(1, m + 1) / m - cdf
    lo = cdf - np.arange(0, m) / m
    return float(max(hi.max(), lo.max()))


def _grid_edges(ref: np.ndarray) -> list[np.ndarray]:
    qs = np.arange(1, GRID_CELLS) / GRID_CELLS
    return [
        np.concatenate([[-np.inf], np.quantile(ref[:, j], qs), [np.inf]])
        for j in range(ref.shape[1])
    ]


def _cum_grid(sample: np.ndarray, edges) -> np.ndarray:
    """``C[i, j] = P(x < e_i, y < e_j)`` on the edge grid."""
    ix = np.searchsorted(edges[0], sample[:, 0], side="right") - 1
    iy = np.searchsorted(edges[1], sample[:, 1], side="right") - 1
    k = len(edges[0]) - 1
    counts = np.zeros((k, k))
    np.add.at(counts, (ix, iy), 1.0)
    C = np.zeros((k + 1, k + 1))
    C[1:, 1:] = counts.cumsum(0).cumsum(1)
    return C / sample.shape[0]


def _normal_cum_grid(edges) -> np.ndarray:
    return np.outer(norm.cdf(edges[0]), norm.cdf(edges[1]))


def rectangle_distance(C1: np.ndarray, C2: np.ndarray) -> float:
    """Sup over grid rectangles ``[x_a, x_b) x [y_c, y_d)`` of the probability gap."""
    D = C1 - C2
    i1, i2 = np.triu_indices(D.shape[0], k=1)
    vals = D[i2][:, i2] - D[i1][:, i2] - D[i2][:, i1] + D[i1][:, i1]
    return float(np.max(np.abs(vals)))


class _Reference:
    """Truth sample prepared for repeated distance evaluations."""

    def __init__(self, draws: np.ndarray):
        self.draws = draws
        self.sorted = [np.sort(draws[:, j]) for j in range(draws.shape[1])]
        self.edges = _grid_edges(draws) if draws.shape[1] == 2 else None
        self.cum = _cum_grid(draws, self.edges) if self.edges is not None else None

    def distance(self, sample: np.ndarray) -> float:
        d = max(ks_two_sample(sample[:, j], self.sorted[j]) for j in range(sample.shape[1]))
        if self.cum is not None:
            d = max(d, rectangle_distance(_cum_grid(sample, self.edges), self.cum))
        return d

    def normal_distance(self, draws: np.ndarray | None = None) -> float:
        draws = self.draws if draws is None else draws
        d = max(ks_normal(draws[:, j]) for j in range(draws.shape[1]))
        if self.cum is not None:
            d = max(d, rectangle_distance(_cum_grid(draws, self.edges), _normal_cum_grid(self.edges)))
        return d


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


@dataclass
class MethodResult:
    method: str
    sup_distance: float
    sup_mc_se: float
    scaled_distance: float
    scaled_mc_se: float
    coverage: float
    coverage_se: float
    coverage_by_coord: list[float]
    per_dataset_sup: list[float]
    per_dataset_covered: list[list[bool]]
    n_rejected: int = 0
    unreliable_runs: int = 0


@dataclass
class SimReport:
    scenario: dict
    methods: dict[str, MethodResult]
    truth_draws: int
    truth_dropped: int
    n_outer_done: int
    partial: bool = False
    error: str | None = None

    def paired_median_gap(self, a: str, b: str, seed: int = 0) -> tuple[float, float]:
        """``median(sup_a) - median(sup_b)`` and its bootstrap SE over datasets."""
        return paired_median_gap(
            np.array(self.methods[a].per_dataset_sup),
            np.array(self.methods[b].per_dataset_sup),
            seed,
        )

    def paired_coverage_gap(self, a: str, b: str) -> tuple[float, float]:
        ca = np.array(self.methods[a].per_dataset_covered, dtype=float).mean(axis=1)
        cb = np.array(self.methods[b].per_dataset_covered, dtype=float).mean(axis=1)
        d = ca - cb
        return float(d.mean()), float(d.std(ddof=1) / math.sqrt(d.size))

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self, path=None, indent=2) -> str:
        text = json.dumps(_jsonable(self.to_dict()), indent=indent)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    def write_long_csv(self, path) -> None:
        n = self.scenario["n"]
        seed = self.scenario["seed"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["method", "n", "seed", "dataset", "sup_distance", "scaled_distance", "coverage"])
            for name, r in self.methods.items():
                for k, (d, cov) in enumerate(zip(r.per_dataset_sup, r.per_dataset_covered)):
                    w.writerow([name, n, seed, k, repr(d), repr(math.sqrt(n) * d), repr(float(np.mean(cov)))])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def median_mc_se(values: np.ndarray, seed: int = 0) -> float:
    """Bootstrap standard error of the median over datasets."""
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float("nan")
    rng = _rng.stream(seed, _rng.STREAM_MCSE)
    idx = rng.integers(0, values.size, size=(N_MCSE_RESAMPLES, values.size))
    return float(np.std(np.median(values[idx], axis=1), ddof=1))


def paired_median_gap(a: np.ndarray, b: np.ndarray, seed: int = 0) -> tuple[float, float]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    gap = float(np.median(a) - np.median(b))
    rng = _rng.stream(seed, _rng.STREAM_MCSE, 1)
    idx = rng.integers(0, a.size, size=(N_MCSE_RESAMPLES, a.size))
    boots = np.median(a[idx], axis=1) - np.median(b[idx], axis=1)
    return gap, float(np.std(boots, ddof=1))


def _normal_ci(fit: MFit, level: float) -> np.ndarray:
    z = norm.ppf(0.5 + level / 2.0)
    half = z * standard_errors(fit, PivotKind.H) / math.sqrt(fit.n)
    return np.column_stack([fit.beta_bar - half, fit.beta_bar + half])


def _one_dataset(s: Scenario, X, m, refs, score, scheme):
    data = dataset(s, X, m)
    fit = m_estimate(data, score)
    fit.require_studentizable()
    boot_seed = _rng.derive_seed(s.seed, _rng.STREAM_BOOT, m)
    out = {}
    kinds = [_PERTURB_KIND[k] for k in s.methods if k in _PERTURB_KIND]
    samples = {}
    if kinds:
        multi = perturbation_bootstrap_multi(data, score, fit, scheme, kinds, s.B, boot_seed)
        for name, kind in _PERTURB_KIND.items():
            if name in s.methods:
                samples[name] = multi[kind]
    if "residual" in s.methods:
        samples["residual"] = run_residual_bootstrap(data, score, fit, s.B, boot_seed)
    if "wild" in s.methods:
        samples["wild"] = run_wild_bootstrap(data, fit, s.B, boot_seed)
    beta = s.beta
    for name, smp in samples.items():
        ci = bootstrap_ci(smp, fit, s.level)
        covered = ((ci[:, 0] <= beta) & (beta <= ci[:, 1])).tolist()
        out[name] = (refs[_TARGET[name]].distance(smp.pivots), covered, smp.n_rejected, smp.unreliable)
    if "normal-approx" in s.methods:
        ci = _normal_ci(fit, s.level)
        covered = ((ci[:, 0] <= beta) & (beta <= ci[:, 1])).tolist()
        out["normal-approx"] = (None, covered, 0, False)
    return out


def run_scenario(s: Scenario, n_threads: int | None = None) -> SimReport:
    """Run every method of the scenario; see the module docstring."""
    X = s.design_matrix()
    RegressionData(X, np.zeros(s.n))  # validates the design once
    score, scheme = s.score, s.scheme
    truth = original_pivot_draws(s, X, n_threads)
    refs = {"h": _Reference(truth.h)}
    if any(_TARGET[m] == "hbreve" for m in s.methods):
        refs["hbreve"] = _Reference(truth.hbreve)

    results, error = [], None

    def work(m):
        try:
            return _one_dataset(s, X, m, refs, score, scheme)
        except PertbootError as exc:
            return exc

    for r in _map(work, range(s.n_outer), n_threads):
        if isinstance(r, Exception):
            error = f"{type(r).__name__}: {r}"
            break
        results.append(r)

    root_n = math.sqrt(s.n)
    methods = {}
    for name in s.methods:
        if not results:
            break
        if name == "normal-approx":
            d = refs["h"].normal_distance()
            se = _normal_distance_se(refs["h"], s.seed)
            sups = [d] * len(results)
        else:
            sups = [r[name][0] for r in results]
            d = float(np.median(sups))
            se = median_mc_se(np.array(sups), s.seed)
        cov = np.array([r[name][1] for r in results], dtype=float)
        c = float(cov.mean())
        k = cov.shape[0]
        methods[name] = MethodResult(
            method=name,
            sup_distance=d,
            sup_mc_se=se,
            scaled_distance=root_n * d,
            scaled_mc_se=root_n * se,
            coverage=c,
            coverage_se=math.sqrt(max(c * (1 - c), 1e-12) / (k * cov.shape[1])),
            coverage_by_coord=cov.mean(axis=0).tolist(),
            per_dataset_sup=[float(v) for v in sups],
            per_dataset_covered=cov.astype(bool).tolist(),
            n_rejected=int(sum(r[name][2] for r in results)),
            unreliable_runs=int(sum(r[name][3] for r in results)),
        )
    return SimReport(
        scenario=s.to_dict(),
        methods=methods,
        truth_draws=int(truth.h.shape[0]),
        truth_dropped=truth.n_dropped,
        n_outer_done=len(results),
        partial=error is not None,
        error=error,
    )


def _normal_distance_se(ref: _Reference, seed: int, reps: int = 100) -> float:
    rng = _rng.stream(seed, _rng.STREAM_MCSE, 2)
    m = ref.draws.shape[0]
    vals = [ref.normal_distance(ref.draws[rng.integers(0, m, m)]) for _ in range(reps)]
    return float(np.std(vals, ddof=1))


# ---------------------------------------------------------------------------
# rate sweep
# ---------------------------------------------------------------------------


@dataclass
class RateSweep:
    rows: list[dict]

    def series(self, method: str, key: str = "scaled_distance") -> tuple[list[int], list[float]]:
        pts = [(r["n"], r[key]) for r in self.rows if r["method"] == method]
        return [p[0] for p in pts], [p[1] for p in pts]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(self.rows[0]))
            w.writeheader()
            w.writerows(self.rows)


def sweep_sizes(s: Scenario, n: int, n0: int, growth: float) -> tuple[int, int]:
    """``(B, M)`` at size ``n`` when both grow like ``(n / n0)^growth``.

    Two-sample sup-distances carry Monte Carlo noise of order
    ``(1/B + 1/M)^{1/2}``; after scaling by ``sqrt(n)`` that noise shrinks
    along the grid only if ``B`` and ``M`` grow faster than ``n``.
    """
    f = (n / n0) ** growth
    return int(math.ceil(s.B * f)), int(math.ceil(s.M * f))


def rate_sweep(
    s: Scenario,
    n_grid,
    growth: float = 2.0,
    n_threads: int | None = None,
) -> RateSweep:
    """``sqrt(n)``-scaled sup-distance per method along ``n_grid``.

    ``s.B`` and ``s.M`` are taken as the sizes at ``n_grid[0]``.
    """
    n_grid = [int(n) for n in n_grid]
    if len(n_grid) < 3 or any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise InvalidParameterError("n_grid must be increasing with at least 3 points")
    rows = []
    for n in n_grid:
        B, M = sweep_sizes(s, n, n_grid[0], growth)
        rep = run_scenario(replace(s, n=n, B=B, M=M), n_threads)
        if rep.partial:
            raise PertbootError(f"sweep failed at n={n}: {rep.error}")
        for name, r in rep.methods.items():
            rows.append(
                dict(
                    method=name,
                    n=n,
                    B=B,
                    M=M,
                    sup_distance=r.sup_distance,
                    scaled_distance=r.scaled_distance,
                    scaled_mc_se=r.scaled_mc_se,
                    coverage=r.coverage,
                )
            )
    return RateSweep(rows)


# ---------------------------------------------------------------------------
# heteroscedastic variance study
# ---------------------------------------------------------------------------


@dataclass
class VarianceStudy:
    """Conditional bootstrap variances of the slope in ``y = beta x + e``.

    Arrays hold one value per dataset.  ``target`` is the sandwich variance
    ``sum x^2 s^2 / (sum x^2)^2``.
    """

    target: float
    perturb_var: np.ndarray
    residual_var_mc: np.ndarray
    residual_var_exact: np.ndarray
    residual_var_formula: np.ndarray

    @staticmethod
    def _mean_se(v):
        return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(v.size))

    def summary(self) -> dict:
        out = {"target": self.target}
        for key in ("perturb_var", "residual_var_mc", "residual_var_exact"):
            m, se = self._mean_se(getattr(self, key))
            out[key] = {"mean": m, "se": se, "z_vs_target": (m - self.target) / se}
        return out


def conditional_variance_study(
    n: int = 200,
    low: float = 1.0,
    high: float = 2.0,
    a: float = 0.5,
    b: float = 1.0,
    beta: float = 1.0,
    n_datasets: int = 200,
    B: int = 2000,
    seed: int = 0,
    scheme: WeightScheme | None = None,
) -> VarianceStudy:
    """Perturbation versus residual bootstrap variance under heteroscedasticity.

    Single regressor without intercept, ``x_i ~ U(low, high)`` drawn once,
    ``e_i ~ N(0, (a + b x_i)^2)``, least squares.  For each dataset the
    perturbation and residual bootstrap variances of the slope are estimated
    from ``B`` replicates; the residual-bootstrap variance is also computed
    exactly and by the closed form ``mean((e - e_bar)^2) / sum x^2``.
    """
    s = Scenario(
        n=n,
        p=1,
        design=DesignSpec("uniform", low=low, high=high),
        errors=ErrorLaw("hetero", a=a, b=b),
        beta_true=(beta,),
        M=max(n_datasets, MIN_M),
        B=B,
        n_outer=n_datasets,
        seed=seed,
        methods=("perturb-naive", "residual"),
    )
    from .boot import residual_bootstrap_covariance

    scheme = scheme or s.scheme
    score = s.score
    X = s.design_matrix()
    x = X[:, 0]
    sig = s.errors.scales(X)
    target = float(np.sum(x**2 * sig**2) / np.sum(x**2) ** 2)

    def one(m):
        data = dataset(s, X, m)
        fit = m_estimate(data, score)
        bseed = _rng.derive_seed(seed, _rng.STREAM_BOOT, m)
        pert = perturbation_bootstrap_multi(data, score, fit, scheme, [PivotKind.F], B, bseed)
        res = run_residual_bootstrap(data, score, fit, B, bseed)
        e = fit.residuals - fit.residuals.mean()
        return (
            float(np.var(pert[PivotKind.F].estimates[:, 0], ddof=1)),
            float(np.var(res.estimates[:, 0], ddof=1)),
            float(residual_bootstrap_covariance(fit)[0, 0]),
            float(np.mean(e * e) / np.sum(x * x)),
        )

    vals = np.array(_map(one, range(n_datasets), None))
    return VarianceStudy(target, vals[:, 0], vals[:, 1], vals[:, 2], vals[:, 3])


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

_SECTIONS = {
    "scenario": {"n", "p", "seed", "M", "B", "n_outer", "level", "methods", "beta_true"},
    "design": {"kind", "intercept", "low", "high", "path"},
    "errors": {"law", "sigma", "rate", "df", "a", "b", "sigmas"},
    "score": {"name", "tuning"},
    "scheme": {"name", "scale"},
    "sweep": {"n_grid", "growth"},
}


class ConfigError(InvalidParameterError):
    """Unknown or ill-typed configuration key."""


def scenario_from_mapping(cfg: dict) -> tuple[Scenario, dict]:
    """Build a scenario from a parsed config; returns ``(scenario, sweep)``.

    Raises :class:`ConfigError` naming the first unknown section or key.
    """
    for sec, body in cfg.items():
        if sec not in _SECTIONS:
            raise ConfigError(f"unknown config section [{sec}]")
        if not isinstance(body, dict):
            raise ConfigError(f"config entry {sec!r} must be a section")
        for key in body:
            if key not in _SECTIONS[sec]:
                raise ConfigError(f"unknown config key '{sec}.{key}'")
    sc = dict(cfg.get("scenario", {}))
    if "n" not in sc:
        raise ConfigError("missing config key 'scenario.n'")
    dz = dict(cfg.get("design", {}))
    er = dict(cfg.get("errors", {}))
    if "law" in er:
        er["kind"] = er.pop("law")
    if "sigmas" in er:
        er["sigmas"] = tuple(float(v) for v in er["sigmas"])
    scr = cfg.get("score", {})
    sch = cfg.get("scheme", {})
    try:
        s = Scenario(
            n=int(sc["n"]),
            p=int(sc.get("p", 1)),
            design=DesignSpec(**dz),
            errors=ErrorLaw(**er),
            score_name=scr.get("name", "ls"),
            score_tuning=scr.get("tuning"),
            scheme_name=sch.get("name", "scaled-beta-half"),
            scheme_scale=sch.get("scale"),
            beta_true=tuple(float(v) for v in sc["beta_true"]) if "beta_true" in sc else None,
            M=int(sc.get("M", 20_000)),
            B=int(sc.get("B", 2_000)),
            n_outer=int(sc.get("n_outer", 50)),
            level=float(sc.get("level", 0.95)),
            seed=int(sc.get("seed", 0)),
            methods=tuple(sc.get("methods", METHODS)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, InvalidParameterError):
            raise
        raise ConfigError(f"bad config value: {exc}") from exc
    return s, dict(cfg.get("sweep", {}))
