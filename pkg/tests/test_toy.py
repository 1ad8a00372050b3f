import numpy as np
import pytest
from scipy import stats

from critscore.core import ParameterPoint, modified_statistic
from critscore.exceptions import DomainError
from critscore.models.toy import (ToyData, ToyModel, toy_group_score, toy_loglik, toy_modified_score, toy_score,
                                  toy_simulate, toy_statistic_closed_form)


def dense_toy_loglik(theta, data):
    r = data.r
    cov = theta**2 * np.ones((r, r)) + np.eye(r)
    return stats.multivariate_normal(np.zeros(r), cov).logpdf(data.y).sum()


def test_loglik_at_zero(rng):
    data = ToyData(rng.normal(size=(7, 3)))
    ref = -0.5 * 21 * np.log(2 * np.pi) - 0.5 * np.sum(data.y**2)
    assert toy_loglik(0.0, data) == pytest.approx(ref, rel=1e-14)


def test_loglik_scalar_case(rng):
    data = ToyData(rng.normal(size=(9, 1)))
    ref = stats.norm(0, np.sqrt(2)).logpdf(data.y).sum()
    assert toy_loglik(1.0, data) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("theta", [0.0, 0.37, 1.9])
def test_loglik_dense(theta, rng):
    data = ToyData(rng.normal(size=(11, 4)) * 1.5)
    assert abs(toy_loglik(theta, data) - dense_toy_loglik(theta, data)) <= 1e-10 * abs(dense_toy_loglik(theta, data))


def test_domain():
    with pytest.raises(DomainError):
        toy_loglik(-0.1, ToyData(np.zeros((1, 1))))
    with pytest.raises(DomainError):
        ToyData(np.array([[np.nan]]))


def test_score_zero_at_zero(rng):
    for _ in range(5):
        assert toy_score(0.0, ToyData(rng.normal(size=(6, 3)))) == 0.0


def test_score_finite_difference(rng):
    data = ToyData(rng.normal(size=(20, 3)) * 1.3)
    h = 1e-5
    fd = (toy_loglik(0.3 + h, data) - toy_loglik(0.3 - h, data)) / (2 * h)
    assert toy_score(0.3, data) == pytest.approx(fd, rel=1e-6)


def test_modified_score_second_difference(rng):
    data = ToyData(rng.normal(size=(20, 3)) * 1.3)
    h = 1e-4
    fd2 = (toy_loglik(h, data) - 2 * toy_loglik(0.0, data) + toy_loglik(h, data)) / h**2
    assert toy_modified_score(data) == pytest.approx(fd2, rel=1e-6)


def test_modified_score_zero_when_balanced():
    y = np.array([[1.0, 0.0], [np.sqrt(2.0), 0.0], [np.sqrt(3.0), 0.0]])
    assert toy_modified_score(ToyData(y)) == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("theta", [0.0, 0.1, 1.0])
def test_closed_form_equals_generic(theta):
    data = toy_simulate(0.4, 50, 3, seed=11)
    generic = modified_statistic(ToyModel(), ParameterPoint([theta]), data).statistic
    assert generic == pytest.approx(toy_statistic_closed_form(theta, data), rel=1e-8)


def test_closed_form_zero():
    y = np.array([[np.sqrt(2.0)], [0.0]])
    # sum S_i / (1 + theta^2) = 2 = r n at theta = 0
    assert toy_statistic_closed_form(0.0, ToyData(y)) == pytest.approx(0.0, abs=1e-15)


def test_simulate_margins():
    data = toy_simulate(0.0, 2500, 4, seed=1)
    nr = data.y.size
    assert abs(data.y.mean()) < 4 / np.sqrt(nr)
    assert abs(data.y.var() - 1.0) < 4 / np.sqrt(nr) * np.sqrt(2)


def test_simulate_covariance():
    data = toy_simulate(1.0, 40000, 2, seed=2)
    c = np.cov(data.y.T)
    assert c[0, 0] == pytest.approx(2.0, abs=0.06)
    assert c[0, 1] == pytest.approx(1.0, abs=0.05)


def test_simulate_deterministic():
    a = toy_simulate(0.5, 30, 3, seed=99)
    b = toy_simulate(0.5, 30, 3, seed=99)
    assert np.array_equal(a.y, b.y)
    assert not np.array_equal(a.y, toy_simulate(0.5, 30, 3, seed=100).y)


def test_information_matches_score_variance():
    theta, r = 0.3, 3
    data = toy_simulate(theta, 100_000, r, seed=4)
    g = toy_group_score(theta, data)
    var = g.var(ddof=1)
    m4 = np.mean((g - g.mean()) ** 4)
    se = np.sqrt((m4 - var**2) / g.size)
    analytic = ToyModel().fisher_info(ParameterPoint([theta]), ToyData(np.zeros((1, r))))[0, 0]
    assert var > 0
    assert abs(var - analytic) <= 3 * se
