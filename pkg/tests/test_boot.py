import itertools
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import kstest

from pertboot import (
    BootstrapFailure,
    DegenerateStudentizationError,
    InvalidParameterError,
    PivotKind,
    RegressionData,
    ReplicateRejected,
    UnsupportedScoreError,
    get_score,
    m_estimate,
    make_custom_scheme,
    make_scaled_beta_half,
    perturb_pivot,
    perturb_replicate,
    perturbation_bootstrap_multi,
    run_perturbation_bootstrap,
    run_residual_bootstrap,
    run_wild_bootstrap,
)
from pertboot.boot import (
    MAMMEN_HIGH,
    MAMMEN_LOW,
    MAMMEN_P_LOW,
    PivotSample,
    QuantileExtrapolationWarning,
    bootstrap_ci,
    coordinate_tstats,
    mammen_draws,
    residual_bootstrap_covariance,
    residual_replicate,
    standard_errors,
    trust_radius,
    wild_replicate,
)

from .conftest import make_data

SCHEME = make_scaled_beta_half()


def weights(n, seed):
    return SCHEME.draw(np.random.default_rng(seed), n)


# -- perturb_replicate -------------------------------------------------------


@pytest.mark.parametrize("problem", ["ls_problem", "huber_problem"])
def test_constant_weights_return_the_fit(problem, request):
    data, score, fit, _ = request.getfixturevalue(problem)
    for c in (SCHEME.mu, 0.3, 7.0):
        beta = perturb_replicate(data, score, fit, np.full(data.n, c))
        np.testing.assert_array_equal(beta, fit.beta_bar)


def test_ls_matches_weighted_normal_equations(ls_problem):
    data, score, fit, _ = ls_problem
    X, y = data.X, data.y
    for seed in range(20):
        w = weights(data.n, seed)
        closed = np.linalg.solve(X.T @ (X * w[:, None]), X.T @ (w * y))
        np.testing.assert_allclose(perturb_replicate(data, score, fit, w), closed, rtol=1e-10)


def test_newton_path_agrees_with_closed_form(ls_problem):
    data, score, fit, _ = ls_problem
    for seed in range(20):
        w = weights(data.n, seed)
        a = perturb_replicate(data, score, fit, w, method="ls")
        b = perturb_replicate(data, score, fit, w, method="newton")
        np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_robust_replicate_solves_weighted_equation(huber_problem):
    data, score, fit, _ = huber_problem
    w = weights(data.n, 4)
    beta = perturb_replicate(data, score, fit, w)
    g = data.X.T @ (score.eval(data.y - data.X @ beta) * w) / data.n
    assert np.linalg.norm(g) <= 1e-10 * fit.eq_scale * w.mean()


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_weight_rescaling_leaves_estimate_and_modified_pivot(seed, c):
    data, beta0 = make_data(n=30, seed=seed % 7)
    for name in ("ls", "pseudo-huber"):
        score = get_score(name)
        fit = m_estimate(data, score)
        w = weights(data.n, seed)
        b1 = perturb_replicate(data, score, fit, w)
        b2 = perturb_replicate(data, score, fit, c * w)
        np.testing.assert_allclose(b1, b2, rtol=1e-12, atol=1e-13)
        h1 = perturb_pivot(data, score, fit, w, SCHEME, "htilde")
        h2 = perturb_pivot(data, score, fit, c * w, make_scaled_beta_half(4.0 * c), "htilde")
        np.testing.assert_allclose(h1, h2, rtol=1e-10, atol=1e-12)


def test_singular_weighted_design_is_rejected(ls_problem):
    data, score, fit, _ = ls_problem
    w = np.zeros(data.n)
    w[0] = 1.0
    with pytest.raises(ReplicateRejected):
        perturb_replicate(data, score, fit, w)


def test_trust_region_rejects_far_solutions(ls_problem):
    data, score, fit, _ = ls_problem
    w = weights(data.n, 1)
    with pytest.raises(ReplicateRejected):
        perturb_replicate(data, score, fit, w, radius=1e-9)


@pytest.mark.parametrize("bad", [np.full(40, -1.0), np.zeros(40), np.ones(39)])
def test_invalid_weights(ls_problem, bad):
    data, score, fit, _ = ls_problem
    with pytest.raises(InvalidParameterError):
        perturb_replicate(data, score, fit, bad)


def test_trust_radius_formula(ls_problem):
    _, _, fit, _ = ls_problem
    n, p = fit.n, fit.p
    lam = np.linalg.eigvalsh(fit.A_n)[0]
    expected = 10 * np.sqrt(p * np.log(n) / n) * fit.sigma_hat * np.sqrt(1 / lam)
    assert trust_radius(fit) == pytest.approx(expected)


# -- pivots --------------------------------------------------------------------


def test_pivot_definitions_by_hand(huber_problem):
    data, score, fit, _ = huber_problem
    X, n = data.X, data.n
    w = weights(n, 11)
    mu = SCHEME.mu
    beta = perturb_replicate(data, score, fit, w)
    d = beta - fit.beta_bar
    e = data.y - X @ beta
    psi, dpsi = score.eval(e), score.deriv1(e)
    F = np.sqrt(n) * fit.sigma_half_inv @ d
    sig_naive = np.sqrt(np.mean(psi**2)) / np.mean(dpsi)
    sig_mod = np.sqrt(np.mean(psi**2 * (w - mu) ** 2)) / np.mean(dpsi * w)
    A1 = X.T @ (X * (dpsi * w)[:, None]) / n
    A2 = X.T @ (X * (psi**2 * (w - mu) ** 2)[:, None]) / n
    vals, vecs = np.linalg.eigh(A2)
    A2_inv_half = vecs @ np.diag(vals**-0.5) @ vecs.T
    expected = {
        "f": F,
        "h": F * fit.sigma_hat / sig_naive,
        "htilde": F * fit.sigma_hat / sig_mod,
        "hbreve": np.sqrt(n) * A2_inv_half @ A1 @ d,
    }
    for kind, want in expected.items():
        np.testing.assert_allclose(perturb_pivot(data, score, fit, w, SCHEME, kind), want, rtol=1e-10)


def test_three_point_location_example():
    data = RegressionData(np.ones((3, 1)), np.array([0.0, 1.0, 2.0]))
    score = get_score("ls")
    fit = m_estimate(data, score)
    w = np.array([1.0, 2.0, 1.0])
    beta = perturb_replicate(data, score, fit, w)
    assert beta[0] == pytest.approx(1.0) and fit.beta_bar[0] == pytest.approx(1.0)
    for kind in ("f", "h"):
        np.testing.assert_allclose(perturb_pivot(data, score, fit, w, SCHEME, kind), 0.0, atol=1e-15)
    # With mu = 1 the weights deviate from mu only where the residual is zero,
    # so the modified and hetero studentizers vanish and the replicate is rejected.
    for kind in ("htilde", "hbreve"):
        with pytest.raises(ReplicateRejected):
            perturb_pivot(data, score, fit, w, SCHEME, kind)


def test_constant_weights_give_zero_pivots(ls_problem):
    data, score, fit, _ = ls_problem
    w = np.full(data.n, SCHEME.mu)
    for kind in ("f", "h"):
        np.testing.assert_array_equal(perturb_pivot(data, score, fit, w, SCHEME, kind), 0.0)


def test_pivot_kind_parsing():
    assert PivotKind.parse("modified-studentized-Htilde") is PivotKind.HTILDE
    assert PivotKind.parse("HBREVE") is PivotKind.HBREVE
    assert {k.tag for k in PivotKind} == {
        "standardized-F",
        "naive-studentized-H",
        "modified-studentized-Htilde",
        "hetero-studentized-Hbreve",
    }
    with pytest.raises(InvalidParameterError):
        PivotKind.parse("g")


# -- perturbation engine -------------------------------------------------------


def test_engine_rows_match_single_replicates(huber_problem):
    data, score, fit, _ = huber_problem
    from pertboot import _rng

    sample = run_perturbation_bootstrap(data, score, fit, SCHEME, "htilde", 5, seed=3)
    assert sample.pivots.shape == (5, 2) and sample.n_rejected == 0
    for b in range(5):
        w = SCHEME.draw(_rng.stream(3, _rng.STREAM_PERTURB, b), data.n)
        np.testing.assert_allclose(
            sample.pivots[b], perturb_pivot(data, score, fit, w, SCHEME, "htilde"), rtol=1e-10
        )


@pytest.mark.parametrize("B", [1, 700])
def test_engine_is_deterministic_across_threads(ls_problem, B):
    data, score, fit, _ = ls_problem
    runs = [
        run_perturbation_bootstrap(data, score, fit, SCHEME, "hbreve", B, seed=5, n_threads=k)
        for k in (1, 1, 2, 4)
    ]
    for r in runs[1:]:
        np.testing.assert_array_equal(r.pivots, runs[0].pivots)


def test_thread_count_from_environment(ls_problem, monkeypatch):
    data, score, fit, _ = ls_problem
    a = run_perturbation_bootstrap(data, score, fit, SCHEME, "h", 600, seed=2)
    monkeypatch.setenv("PERTBOOT_THREADS", "3")
    b = run_perturbation_bootstrap(data, score, fit, SCHEME, "h", 600, seed=2)
    np.testing.assert_array_equal(a.pivots, b.pivots)


def test_multi_kinds_share_draws(ls_problem):
    data, score, fit, _ = ls_problem
    multi = perturbation_bootstrap_multi(data, score, fit, SCHEME, ["f", "htilde"], 50, seed=9)
    single = run_perturbation_bootstrap(data, score, fit, SCHEME, "htilde", 50, seed=9)
    np.testing.assert_array_equal(multi[PivotKind.HTILDE].pivots, single.pivots)
    np.testing.assert_array_equal(multi[PivotKind.F].estimates, single.estimates)


def test_degenerate_fit_fails_hard():
    X = np.column_stack([np.ones(10), np.arange(10.0)])
    data = RegressionData(X, 2 + X[:, 1])
    score = get_score("ls")
    fit = m_estimate(data, score)
    with pytest.raises(DegenerateStudentizationError):
        run_perturbation_bootstrap(data, score, fit, SCHEME, "htilde", 10, seed=0)


def _sparse_scheme(p_zero):
    def sampler(rng, size):
        w = SCHEME.draw(rng, size)
        kill = rng.random(size) < p_zero
        return np.where(kill, 0.0, w)

    return make_custom_scheme(sampler, mu=1.0)


def test_rejections_are_redrawn_and_flagged():
    # n = 3 location model: a replicate is singular when all three weights vanish.
    data = RegressionData(np.ones((3, 1)), np.array([0.0, 1.0, 3.0]))
    score = get_score("ls")
    fit = m_estimate(data, score)
    sample = run_perturbation_bootstrap(data, score, fit, _sparse_scheme(0.3), "f", 2000, seed=1)
    assert sample.B == 2000
    assert np.isfinite(sample.pivots).all()
    assert 0 < sample.rejection_rate <= 0.1
    assert sample.unreliable


def test_excessive_rejections_fail():
    data = RegressionData(np.ones((3, 1)), np.array([0.0, 1.0, 3.0]))
    score = get_score("ls")
    fit = m_estimate(data, score)
    with pytest.raises(BootstrapFailure):
        run_perturbation_bootstrap(data, score, fit, _sparse_scheme(0.7), "f", 500, seed=1)


def test_modified_pivot_is_approximately_standard_normal():
    rng = np.random.default_rng(21)
    X = np.column_stack([np.ones(100), rng.normal(size=100)])
    data = RegressionData(X, X @ [1.0, -1.0] + rng.normal(size=100))
    score = get_score("ls")
    fit = m_estimate(data, score)
    sample = run_perturbation_bootstrap(data, score, fit, SCHEME, "htilde", 2000, seed=4)
    for j in range(2):
        assert kstest(sample.pivots[:, j], "norm").statistic < 0.05


# -- residual engine -----------------------------------------------------------


def test_residual_two_point_enumeration():
    a = 0.7
    data = RegressionData(np.ones((2, 1)), np.array([5.0 - a, 5.0 + a]))
    score = get_score("ls")
    fit = m_estimate(data, score)
    outcomes = {}
    for idx in itertools.product(range(2), repeat=2):
        b = round(float(residual_replicate(data, score, fit, np.array(idx))[0] - 5.0), 12)
        outcomes[b] = outcomes.get(b, 0) + 0.25
    assert outcomes == {-a: 0.25, 0.0: 0.5, a: 0.25}


def test_residual_replicate_for_robust_score(huber_problem):
    data, score, fit, _ = huber_problem
    idx = np.random.default_rng(0).integers(0, data.n, data.n)
    beta = residual_replicate(data, score, fit, idx)
    e = fit.residuals - fit.residuals.mean()
    y_star = data.X @ fit.beta_bar + e[idx]
    assert np.linalg.norm(data.X.T @ score.eval(y_star - data.X @ beta)) < 1e-8


def test_residual_covariance_matches_monte_carlo(ls_problem):
    data, score, fit, _ = ls_problem
    sample = run_residual_bootstrap(data, score, fit, 20_000, seed=3)
    cov = np.cov(sample.estimates.T)
    exact = residual_bootstrap_covariance(fit)
    np.testing.assert_allclose(np.diag(cov), np.diag(exact), rtol=0.05)


def test_residual_engine_robust_score_runs(huber_problem):
    data, score, fit, _ = huber_problem
    sample = run_residual_bootstrap(data, score, fit, 50, seed=2)
    assert sample.pivots.shape == (50, 2) and sample.engine == "residual"


def test_residual_zero_residuals_fail_hard():
    data = RegressionData(np.ones((4, 1)), np.full(4, 2.0))
    score = get_score("ls")
    fit = m_estimate(data, score)
    assert fit.degenerate
    idx = np.array([0, 0, 1, 3])
    np.testing.assert_array_equal(residual_replicate(data, score, fit, idx), fit.beta_bar)
    with pytest.raises(DegenerateStudentizationError):
        run_residual_bootstrap(data, score, fit, 10, seed=0)


# -- wild engine ---------------------------------------------------------------


def test_mammen_law_moments():
    lo, hi, p = MAMMEN_LOW, MAMMEN_HIGH, MAMMEN_P_LOW
    assert p * lo + (1 - p) * hi == pytest.approx(0.0, abs=1e-15)
    assert p * lo**2 + (1 - p) * hi**2 == pytest.approx(1.0)
    assert p * lo**3 + (1 - p) * hi**3 == pytest.approx(1.0)
    t = mammen_draws(np.random.default_rng(0), 200_000)
    assert set(np.unique(t)) == {lo, hi}
    assert abs(t.mean()) < 0.01


def test_wild_zero_residuals_returns_fit():
    data = RegressionData(np.ones((4, 1)), np.full(4, 2.0))
    fit = m_estimate(data, get_score("ls"))
    np.testing.assert_array_equal(wild_replicate(data, fit, np.ones(4)), fit.beta_bar)


def test_wild_requires_least_squares(huber_problem):
    data, _, fit, _ = huber_problem
    with pytest.raises(UnsupportedScoreError):
        run_wild_bootstrap(data, fit, 10, seed=0)
    with pytest.raises(UnsupportedScoreError):
        wild_replicate(data, fit, np.ones(data.n))


def test_perturbation_equals_wild_through_linearized_equation(ls_problem):
    # Independent oracle: refit least squares on z_i = x_i' beta_hat + e_i (G_i - mu) / mu.
    data, score, fit, _ = ls_problem
    X = data.X
    for seed in range(10):
        w = weights(data.n, seed)
        t = (w - SCHEME.mu) / SCHEME.mu
        z = X @ fit.beta_bar + fit.residuals * t
        oracle = np.linalg.lstsq(X, z, rcond=None)[0]
        np.testing.assert_allclose(wild_replicate(data, fit, t), oracle, rtol=1e-10)
        # The same G also solves the linearized perturbation equation
        # sum x_i (y_i - x_i' b) mu + sum x_i e_i (G_i - mu) = ... = 0 at the wild solution.
        lin = X.T @ ((data.y - X @ oracle) * SCHEME.mu + fit.residuals * (w - SCHEME.mu))
        assert np.linalg.norm(lin) < 1e-9


def test_wild_engine_pivots(ls_problem):
    data, _, fit, _ = ls_problem
    s = run_wild_bootstrap(data, fit, 300, seed=1)
    assert s.kind is PivotKind.HBREVE and s.pivots.shape == (300, 2)
    s2 = run_wild_bootstrap(data, fit, 300, seed=1, n_threads=3)
    np.testing.assert_array_equal(s.pivots, s2.pivots)


# -- intervals -----------------------------------------------------------------


def _sample(pivots, kind=PivotKind.H):
    pivots = np.asarray(pivots, dtype=float)
    return PivotSample(kind, pivots, pivots, 0, 0, pivots.shape[0])


def test_symmetric_sample_gives_symmetric_interval(ls_problem):
    _, _, fit, _ = ls_problem
    half = np.random.default_rng(0).normal(size=(500, 2))
    # symmetric in every coordinate t-statistic: include -T for every T
    ci = bootstrap_ci(_sample(np.vstack([half, -half])), fit, 0.9)
    np.testing.assert_allclose(ci.mean(axis=1), fit.beta_bar, atol=1e-12)


@pytest.mark.parametrize("kind", list(PivotKind))
def test_gaussian_quantile_grid_gives_normal_interval(ls_problem, kind):
    from scipy.stats import norm

    _, _, fit, _ = ls_problem
    # Pivots whose coordinate t-statistics are exact normal quantiles.
    B = 20_001
    q = norm.ppf((np.arange(B) + 0.5) / B)
    from pertboot.boot import unstandardize

    R, _ = unstandardize(fit, kind)
    T = np.linalg.solve(R, (np.sqrt(np.einsum("ij,ij->i", R, R))[:, None] * q[None, :])).T
    np.testing.assert_allclose(coordinate_tstats(fit, T, kind), np.column_stack([q, q]), atol=1e-9)
    ci = bootstrap_ci(_sample(T, kind), fit, 0.95)
    half = 1.959964 * standard_errors(fit, kind) / np.sqrt(fit.n)
    np.testing.assert_allclose(ci[:, 0], fit.beta_bar - half, rtol=1e-3)
    np.testing.assert_allclose(ci[:, 1], fit.beta_bar + half, rtol=1e-3)


def test_interval_warns_when_tail_is_unresolved(ls_problem):
    _, _, fit, _ = ls_problem
    s = _sample(np.random.default_rng(0).normal(size=(100, 2)))
    with pytest.warns(QuantileExtrapolationWarning):
        bootstrap_ci(s, fit, 0.999)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        bootstrap_ci(s, fit, 0.9)


@pytest.mark.parametrize("level", [0.0, 1.0, 1.5])
def test_interval_level_validation(ls_problem, level):
    _, _, fit, _ = ls_problem
    with pytest.raises(InvalidParameterError):
        bootstrap_ci(_sample(np.zeros((200, 2))), fit, level)


def test_interval_needs_100_pivots(ls_problem):
    _, _, fit, _ = ls_problem
    with pytest.raises(InvalidParameterError):
        bootstrap_ci(_sample(np.zeros((99, 2))), fit, 0.9)


def test_standard_errors_match_classical_formulas(ls_problem):
    data, _, fit, _ = ls_problem
    X, e, n = data.X, fit.residuals, data.n
    XtX_inv = np.linalg.inv(X.T @ X)
    classical = np.sqrt(np.mean(e**2) * np.diag(XtX_inv))
    sandwich = np.sqrt(np.diag(XtX_inv @ (X.T @ (X * e[:, None] ** 2)) @ XtX_inv))
    np.testing.assert_allclose(standard_errors(fit, "h") / np.sqrt(n), classical, rtol=1e-10)
    np.testing.assert_allclose(standard_errors(fit, "hbreve") / np.sqrt(n), sandwich, rtol=1e-10)
