"""Chi-square reference distribution via the regularized incomplete gamma."""

import math

from .exceptions import DomainError

_EPS = 1e-16
_TINY = 1e-300
_MAXITER = 10_000


def _gamma_series(a, x):
    # P(a, x) by the power series, good for x < a + 1
    term = 1.0 / a
    total = term
    ap = a
    for _ in range(_MAXITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_contfrac(a, x):
    # Q(a, x) by the Legendre continued fraction (modified Lentz), x >= a + 1
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAXITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_gamma_p(a, x):
    """Lower regularized incomplete gamma ``P(a, x)``."""
    if a <= 0:
        raise DomainError(f"shape must be positive, got {a}")
    if x < 0:
        raise DomainError(f"argument must be nonnegative, got {x}")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return max(0.0, 1.0 - _gamma_contfrac(a, x))


def regularized_gamma_q(a, x):
    """Upper regularized incomplete gamma ``Q(a, x) = 1 - P(a, x)``."""
    if a <= 0:
        raise DomainError(f"shape must be positive, got {a}")
    if x < 0:
        raise DomainError(f"argument must be nonnegative, got {x}")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return max(0.0, 1.0 - _gamma_series(a, x))
    return min(1.0, _gamma_contfrac(a, x))


def _check_df(df):
    if int(df) != df or df < 1:
        raise DomainError(f"degrees of freedom must be a positive integer, got {df}")
    return int(df)


def chisq_cdf(df, x):
    df = _check_df(df)
    if not x >= 0:
        raise DomainError(f"chi-square argument must be nonnegative, got {x}")
    return regularized_gamma_p(0.5 * df, 0.5 * x)


def chisq_sf(df, x):
    """Upper tail ``1 - chisq_cdf(df, x)`` without cancellation."""
    df = _check_df(df)
    if not x >= 0:
        raise DomainError(f"chi-square argument must be nonnegative, got {x}")
    return regularized_gamma_q(0.5 * df, 0.5 * x)


def chisq_pdf(df, x):
    df = _check_df(df)
    if x <= 0:
        if df == 1:
            return math.inf
        return 0.5 if df == 2 else 0.0
    k = 0.5 * df
    return math.exp((k - 1.0) * math.log(x) - 0.5 * x - k * math.log(2.0) - math.lgamma(k))


def chisq_quantile(df, p):
    """Inverse of :func:`chisq_cdf` by safeguarded Newton iteration."""
    df = _check_df(df)
    if not 0.0 <= p < 1.0:
        raise DomainError(f"probability must lie in [0, 1), got {p}")
    if p == 0.0:
        return 0.0

    # Wilson-Hilferty start
    z = _normal_quantile(p)
    h = 2.0 / (9.0 * df)
    x = max(df * (1.0 - h + z * math.sqrt(h)) ** 3, 1e-8)

    lo, hi = 0.0, math.inf
    for _ in range(200):
        f = chisq_cdf(df, x) - p
        if f > 0:
            hi = min(hi, x)
        else:
            lo = max(lo, x)
        dens = chisq_pdf(df, x)
        step = f / dens if dens > 0 else math.inf
        new = x - step
        if not (lo < new < hi) or not math.isfinite(new):
            new = 0.5 * (lo + hi) if math.isfinite(hi) else 2.0 * x + 1.0
        if abs(new - x) <= 1e-15 * max(x, 1e-300):
            x = new
            break
        x = new
    return x


def _normal_quantile(p):
    # Acklam's rational approximation; only used as a starting value
    a = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
         1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
    b = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
         6.680131188771972e01, -1.328068155288572e01)
    c = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
         -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
    d = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
         3.754408661907416e00)
    plow = 0.02425
    if p < plow:
        q = math.sqrt(-2 * math.log(p))
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1)
    if p > 1 - plow:
        q = math.sqrt(-2 * math.log(1 - p))
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / \
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1)
    q = p - 0.5
    r = q * q
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q / \
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1)
