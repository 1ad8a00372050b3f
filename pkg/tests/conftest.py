import numpy as np
import pytest

from critscore.models.lmm import LmmData, build_sigma

ACCEPTANCE_LINES: list[str] = []


def random_lmm(rng, n=6, r_range=(2, 6), p=2, q=2, scale_map=None, intercept=True):
    """Random grouped design with Gaussian responses (not drawn from any particular model)."""
    scale_map = list(range(q)) if scale_map is None else list(scale_map)
    groups = []
    for _ in range(n):
        r = int(rng.integers(r_range[0], r_range[1] + 1))
        X = rng.normal(size=(r, p))
        Z = rng.normal(size=(r, q))
        if intercept:
            X[:, 0] = 1.0
            Z[:, 0] = 1.0
        groups.append((rng.normal(size=r), X, Z))
    return LmmData.from_groups(groups, scale_map)


def dense_loglik(lam, psi, sigma, data):
    """Group-by-group multivariate normal log-density with an explicit Cholesky."""
    total = 0.0
    for i in range(data.n):
        y, X, Z = data.group(i)
        S, _ = build_sigma(lam, sigma, Z, data.scale_map)
        L = np.linalg.cholesky(S)
        e = np.linalg.solve(L, y - X @ psi)
        total += -0.5 * y.size * np.log(2 * np.pi) - np.log(np.diag(L)).sum() - 0.5 * e @ e
    return total


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
