import numpy as np
import pytest

from critscore.chisq import chisq_quantile
from critscore.core import ParameterPoint
from critscore.exceptions import DomainError, EmptyRegion, SingularInformation
from critscore.models.toy import ToyModel, toy_simulate, toy_statistic_closed_form
from critscore.regions import componentwise_interval, invert_region, invert_scalar


def toy_interval(data, level):
    """Closed-form accepted set in theta for the pivotal toy statistic."""
    r, n = data.r, data.n
    S = data.sums_sq.sum()
    half = r * np.sqrt(2 * n * chisq_quantile(1, level))
    lo_x, hi_x = r * n - half, r * n + half
    # accepted iff lo_x <= S / (1 + r t^2) <= hi_x
    t_hi = np.sqrt(max(S / lo_x - 1, 0) / r) if lo_x > 0 else np.inf
    t_lo = np.sqrt(max(S / hi_x - 1, 0) / r)
    return t_lo, t_hi


def test_grid_brackets_closed_form():
    data = toy_simulate(0.6, 80, 2, seed=3)
    axis = np.linspace(0.0, 2.0, 401)
    grid = invert_region(ToyModel(), data, [0], ParameterPoint([0.0]), [axis], levels=(0.9, 0.95))
    lo, hi = toy_interval(data, 0.95)
    inside = axis[grid.membership[0.95]]
    assert inside.size > 0
    step = axis[1] - axis[0]
    assert inside.min() - step <= lo <= inside.min() + 1e-12
    assert inside.max() - 1e-12 <= hi <= inside.max() + step
    # membership is exactly the threshold rule
    crit = chisq_quantile(1, 0.95)
    assert np.array_equal(grid.membership[0.95], grid.statistic <= crit)
    assert np.allclose(grid.statistic, [toy_statistic_closed_form(t, data) for t in axis], rtol=1e-8)


def test_levels_nest():
    data = toy_simulate(0.3, 50, 3, seed=4)
    axis = np.linspace(0.0, 1.5, 151)
    grid = invert_region(ToyModel(), data, [0], ParameterPoint([0.0]), [axis], levels=(0.8, 0.9, 0.95, 0.99))
    for a, b in zip(grid.levels, grid.levels[1:]):
        assert np.all(grid.membership[b] | ~grid.membership[a])
    rows = list(grid.rows())
    assert len(rows) == axis.size and len(rows[0][2]) == 4


def test_componentwise_matches_closed_form():
    data = toy_simulate(0.6, 80, 2, seed=3)
    lo, hi = toy_interval(data, 0.95)
    iv = componentwise_interval(ToyModel(), data, 0, 0.95, (0.0, 2.0), 1e-9, ParameterPoint([0.5]), 60)
    assert iv.lo == pytest.approx(lo, abs=1e-8)
    assert iv.hi == pytest.approx(hi, abs=1e-8)
    assert not iv.disconnected and not iv.upper_truncated


def test_single_point_grid_at_truth():
    data = toy_simulate(0.5, 200, 2, seed=8)
    grid = invert_region(ToyModel(), data, [0], ParameterPoint([0.0]), [[0.5]], levels=(0.99,))
    assert grid.statistic.shape == (1,)


def test_singular_points_are_flagged():
    class Broken(ToyModel):
        def modified_info(self, theta, pattern, data):
            if theta.lam[0] > 1.0:
                return np.zeros((1, 1))
            return super().modified_info(theta, pattern, data)

    data = toy_simulate(0.5, 30, 2, seed=1)
    axis = np.linspace(0.0, 2.0, 11)
    grid = invert_region(Broken(), data, [0], ParameterPoint([0.0]), [axis])
    assert np.array_equal(grid.singular, axis > 1.0)
    assert not grid.membership[0.95][axis > 1.0].any()


def test_disconnected_and_empty():
    f = lambda x: 0.0 if abs(x - 1) < 0.3 or abs(x - 3) < 0.3 else 10.0
    iv = invert_scalar(f, 1.0, np.linspace(0, 4, 41), 1e-8)
    assert iv.disconnected and len(iv.segments) == 2
    assert iv.lo == pytest.approx(0.7, abs=1e-7) and iv.hi == pytest.approx(3.3, abs=1e-7)
    with pytest.raises(EmptyRegion):
        invert_scalar(lambda x: 10.0, 1.0, np.linspace(0, 1, 5))


def test_truncation_flags():
    iv = invert_scalar(lambda x: x, 5.0, np.linspace(0, 3, 7), domain_lo=0.0)
    assert not iv.lower_truncated and iv.upper_truncated
    iv = invert_scalar(lambda x: x, 5.0, np.linspace(-1, 3, 7))
    assert iv.lower_truncated


def test_domain_checks():
    data = toy_simulate(0.5, 10, 2, seed=1)
    with pytest.raises(DomainError):
        invert_region(ToyModel(), data, [0], ParameterPoint([0.0]), [[-0.1, 0.2]])
    with pytest.raises(DomainError):
        invert_region(ToyModel(), data, [0], ParameterPoint([0.0]), [[0.2, 0.1]])
    with pytest.raises(DomainError):
        componentwise_interval(ToyModel(), data, 0, 0.95, (-1.0, 1.0), 1e-6, ParameterPoint([0.5]))
