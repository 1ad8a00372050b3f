import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from critscore.chisq import chisq_cdf, chisq_pdf, chisq_quantile, chisq_sf, regularized_gamma_p
from critscore.exceptions import DomainError


def test_cdf_at_zero():
    for df in range(1, 8):
        assert chisq_cdf(df, 0.0) == 0.0


def test_two_df_is_exponential():
    for x in [0.01, 0.5, 1.0, 5.99, 20.0, 80.0]:
        assert abs(chisq_cdf(2, x) - (1 - math.exp(-x / 2))) <= 1e-12


def test_familiar_critical_value():
    assert abs(chisq_cdf(1, 3.841458820694124) - 0.95) <= 1e-12
    assert 3.8405 <= chisq_quantile(1, 0.95) <= 3.8420


def test_quantile_endpoints():
    assert chisq_quantile(3, 0.0) == 0.0
    assert abs(chisq_quantile(2, 0.95) - (-2 * math.log(0.05))) <= 1e-12


@pytest.mark.parametrize("df", [1, 2, 3, 5, 10, 40])
def test_against_scipy(df):
    xs = np.concatenate([np.linspace(0.0, 4 * df + 30, 61), [1e-8, 1e-3]])
    for x in xs:
        assert abs(chisq_cdf(df, x) - stats.chi2.cdf(x, df)) <= 1e-12
        assert abs(chisq_sf(df, x) - stats.chi2.sf(x, df)) <= 1e-12 * max(1.0, stats.chi2.sf(x, df))
        if x > 0:
            assert chisq_pdf(df, x) == pytest.approx(stats.chi2.pdf(x, df), rel=1e-10)


@pytest.mark.parametrize("df", [1, 2, 3, 6])
def test_duality(df):
    for p in [1e-6, 0.01, 0.2, 0.5, 0.8, 0.9, 0.95, 0.99, 0.999999]:
        assert abs(chisq_cdf(df, chisq_quantile(df, p)) - p) <= 1e-9


def test_sf_plus_cdf():
    for x in [0.3, 2.0, 11.0]:
        assert chisq_cdf(4, x) + chisq_sf(4, x) == pytest.approx(1.0, abs=1e-14)


def test_domain_errors():
    with pytest.raises(DomainError):
        chisq_cdf(1, -0.1)
    with pytest.raises(DomainError):
        chisq_cdf(0, 1.0)
    with pytest.raises(DomainError):
        chisq_quantile(1, 1.0)
    with pytest.raises(DomainError):
        chisq_quantile(1, -0.01)


def test_incomplete_gamma_half_integer():
    # P(1/2, x) = erf(sqrt(x))
    for x in [0.1, 1.0, 3.0]:
        assert regularized_gamma_p(0.5, x) == pytest.approx(math.erf(math.sqrt(x)), abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.floats(0, 200), st.floats(0, 200))
def test_cdf_monotone(df, a, b):
    lo, hi = min(a, b), max(a, b)
    assert chisq_cdf(df, lo) <= chisq_cdf(df, hi)
