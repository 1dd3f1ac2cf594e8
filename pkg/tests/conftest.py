import numpy as np
import pytest

from pertboot import RegressionData, get_score, m_estimate


def make_data(n=40, p=2, seed=0, errors="normal", intercept=True):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, p))
    if intercept:
        X[:, 0] = 1.0
    if errors == "normal":
        e = rng.normal(size=n)
    elif errors == "exp":
        e = rng.exponential(size=n) - 1.0
    else:
        raise ValueError(errors)
    beta = np.arange(1.0, p + 1.0)
    return RegressionData(X, X @ beta + e), beta


@pytest.fixture
def ls_problem():
    data, beta = make_data()
    score = get_score("ls")
    return data, score, m_estimate(data, score), beta


@pytest.fixture
def huber_problem():
    data, beta = make_data(seed=3)
    score = get_score("pseudo-huber")
    return data, score, m_estimate(data, score), beta


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[k])
