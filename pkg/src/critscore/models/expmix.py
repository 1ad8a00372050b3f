"""Bivariate exponential responses sharing a uniform random effect.

Given ``W ~ U(-sqrt3, sqrt3)`` the two responses are independent exponentials
with rate ``psi + lam * W``; the domain is ``psi > sqrt3 * lam >= 0``. The
likelihood depends on the data only through ``ybul = y1 + y2``.

Two evaluation routes are kept side by side: the closed form through the
antiderivative ``G(t) = exp(-t) (t^2 + 2t + 2)`` of ``-t^2 exp(-t)``, and
64-node Gauss-Legendre quadrature over the random effect (used for scores and
expectations, where the closed form cancels badly as ``lam -> 0``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, roots_genlaguerre, roots_legendre

from ..core import CriticalPattern, ParameterPoint
from ..exceptions import DomainError, SingularInformation
from ..streams import group_uniforms

SQRT3 = np.sqrt(3.0)
TAYLOR_SWITCH = 1e-4


@dataclass(frozen=True)
class ExpMixData:
    y: np.ndarray

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if y.ndim != 2 or y.shape[1] != 2 or y.shape[0] < 1:
            raise DomainError("expected an n x 2 response matrix")
        if not np.all(y > 0) or not np.all(np.isfinite(y)):
            raise DomainError("responses must be positive and finite")
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def ybul(self) -> np.ndarray:
        return self.y.sum(axis=1)


def _check_theta(lam, psi):
    lam, psi = float(lam), float(psi)
    if not lam >= 0 or not psi > SQRT3 * lam:
        raise DomainError(f"need lam >= 0 and psi > sqrt(3) * lam, got lam={lam}, psi={psi}")
    return lam, psi


def legendre_rule(n_nodes=64):
    """Nodes and weights for expectations over ``W ~ U(-sqrt3, sqrt3)``."""
    x, w = roots_legendre(n_nodes)
    return SQRT3 * x, 0.5 * w


def _log_scaled_diff(c, a):
    """``log(exp(c) * {G(c - a) - G(c + a)})``, with a series for small ``a``."""
    c = np.asarray(c, dtype=float)
    a = np.asarray(a, dtype=float)
    small = a < TAYLOR_SWITCH
    out = np.empty(np.broadcast(c, a).shape)
    cs, as_ = np.broadcast_to(c, out.shape)[small], np.broadcast_to(a, out.shape)[small]
    # odd series of the integral of t^2 e^{-t} over (c - a, c + a), times e^c
    series = (2 * as_ * cs**2 + as_**3 / 3 * (2 - 4 * cs + cs**2)
              + as_**5 / 60 * (12 - 8 * cs + cs**2))
    out[small] = np.log(series)
    cl, al = np.broadcast_to(c, out.shape)[~small], np.broadcast_to(a, out.shape)[~small]
    lo, hi = cl - al, cl + al
    out[~small] = np.log(np.exp(al) * (lo**2 + 2 * lo + 2) - np.exp(-al) * (hi**2 + 2 * hi + 2))
    return out


def expmix_loglik_obs(lam, psi, ybul) -> np.ndarray:
    """Per-observation log density (closed form, constants included)."""
    lam, psi = _check_theta(lam, psi)
    ybul = np.asarray(ybul, dtype=float)
    if lam == 0.0:
        return 2 * np.log(psi) - psi * ybul
    c = psi * ybul
    a = SQRT3 * lam * ybul
    return -np.log(2 * SQRT3 * lam) - 3 * np.log(ybul) - c + _log_scaled_diff(c, a)


def expmix_loglik(theta: ParameterPoint, data: ExpMixData) -> float:
    lam, psi = _unpack(theta)
    return float(expmix_loglik_obs(lam, psi, data.ybul).sum())


def expmix_loglik_quadrature(lam, psi, ybul, n_nodes=64) -> np.ndarray:
    """Per-observation log density by Gauss-Legendre over the random effect."""
    lam, psi = _check_theta(lam, psi)
    nodes, weights = legendre_rule(n_nodes)
    rate = psi + lam * nodes
    logh = 2 * np.log(rate)[None, :] - np.outer(np.asarray(ybul, dtype=float), rate)
    return logsumexp(logh, b=weights[None, :], axis=1)


def _posterior_terms(lam, psi, ybul, nodes, weights):
    """Score for (lam, psi) and d^2/dlam^2 log f, per observation, by quadrature."""
    ybul = np.asarray(ybul, dtype=float)
    rate = psi + lam * nodes
    logh = 2 * np.log(rate)[None, :] - np.outer(ybul, rate) + np.log(weights)[None, :]
    logh -= logh.max(axis=1, keepdims=True)
    post = np.exp(logh)
    post /= post.sum(axis=1, keepdims=True)
    u = 2.0 / rate[None, :] - ybul[:, None]
    s_psi = np.sum(post * u, axis=1)
    s_lam = np.sum(post * u * nodes[None, :], axis=1)
    d2_lam = np.sum(post * nodes[None, :] ** 2 * (u**2 - 2.0 / rate[None, :] ** 2), axis=1) - s_lam**2
    return s_lam, s_psi, d2_lam


def expmix_score_obs(lam, psi, ybul, method="quadrature", n_nodes=64) -> np.ndarray:
    """``(n, 2)`` per-observation score ``(s_lam, s_psi)``.

    ``s_psi`` follows direct differentiation: ``2/psi - ybul`` at ``lam = 0``.
    """
    lam, psi = _check_theta(lam, psi)
    ybul = np.asarray(ybul, dtype=float)
    if lam == 0.0:
        return np.column_stack([np.zeros_like(ybul), 2.0 / psi - ybul])
    if method == "closed" and np.all(SQRT3 * lam * ybul >= TAYLOR_SWITCH):
        c = psi * ybul
        a = SQRT3 * lam * ybul
        lo, hi = c - a, c + a
        diff = np.exp(a) * (lo**2 + 2 * lo + 2) - np.exp(-a) * (hi**2 + 2 * hi + 2)
        g_lo = lo**2 * np.exp(a)
        g_hi = hi**2 * np.exp(-a)
        s_lam = -1.0 / lam + SQRT3 * ybul * (g_lo + g_hi) / diff
        s_psi = ybul * (g_hi - g_lo) / diff
        return np.column_stack([s_lam, s_psi])
    if method not in ("closed", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    nodes, weights = legendre_rule(n_nodes)
    s_lam, s_psi, _ = _posterior_terms(lam, psi, ybul, nodes, weights)
    return np.column_stack([s_lam, s_psi])


def expmix_score(theta: ParameterPoint, data: ExpMixData, method="quadrature") -> np.ndarray:
    lam, psi = _unpack(theta)
    return expmix_score_obs(lam, psi, data.ybul, method).sum(axis=0)


def expmix_modified_score_obs(lam, psi, ybul, pattern_k=None, n_nodes=64) -> np.ndarray:
    """Per-observation modified score: second derivative in ``lam`` when ``lam`` is critical."""
    lam, psi = _check_theta(lam, psi)
    ybul = np.asarray(ybul, dtype=float)
    k_lam = pattern_k[0] if pattern_k is not None else (2 if lam == 0.0 else 1)
    if k_lam == 1:
        return expmix_score_obs(lam, psi, ybul, n_nodes=n_nodes)
    if lam == 0.0:
        dev = ybul - 2.0 / psi
        return np.column_stack([dev**2 - 2.0 / psi**2, -dev])
    nodes, weights = legendre_rule(n_nodes)
    _, s_psi, d2 = _posterior_terms(lam, psi, ybul, nodes, weights)
    return np.column_stack([d2, s_psi])


def expmix_modified_score(theta: ParameterPoint, data: ExpMixData, pattern: CriticalPattern) -> np.ndarray:
    lam, psi = _unpack(theta)
    return expmix_modified_score_obs(lam, psi, data.ybul, pattern.k).sum(axis=0)


def critical_info_per_obs(psi) -> np.ndarray:
    """Covariance of ``((Y - 2/psi)^2 - 2/psi^2, 2/psi - Y)`` for ``Y ~ Gamma(2, psi)``.

    From the central moments ``mu2 = 2/psi^2``, ``mu3 = 4/psi^3``, ``mu4 = 24/psi^4``:
    variance ``mu4 - mu2^2``, covariance ``-mu3``, variance ``mu2``.
    """
    psi = float(psi)
    mu2, mu3, mu4 = 2 / psi**2, 4 / psi**3, 24 / psi**4
    return np.array([[mu4 - mu2**2, -mu3], [-mu3, mu2]])


def expected_outer(lam, psi, fn, n_nodes=64, n_laguerre=64) -> np.ndarray:
    """``E[fn(Ybul) fn(Ybul)']`` under ``theta`` by tensor quadrature.

    Outer Gauss-Legendre over ``W``; inner generalized Gauss-Laguerre (alpha = 1)
    for ``Ybul | W ~ Gamma(2, psi + lam W)``.
    """
    nodes, weights = legendre_rule(n_nodes)
    s, ws = roots_genlaguerre(n_laguerre, 1.0)
    rate = psi + lam * nodes
    t = (s[None, :] / rate[:, None]).ravel()
    wt = (weights[:, None] * ws[None, :]).ravel()
    vals = fn(t)
    return (vals * wt[:, None]).T @ vals


def expmix_modified_info(theta: ParameterPoint, n: int, pattern: CriticalPattern | None = None,
                         n_nodes=64, n_laguerre=64) -> np.ndarray:
    """``n`` times the per-observation covariance of the modified score."""
    lam, psi = _unpack(theta)
    k = pattern.k if pattern is not None else (2 if lam == 0.0 else 1, 1)
    if lam == 0.0 and k[0] == 2:
        info = critical_info_per_obs(psi)
    else:
        info = expected_outer(
            lam, psi, lambda t: expmix_modified_score_obs(lam, psi, t, k, n_nodes), n_nodes, n_laguerre)
    info = n * 0.5 * (info + info.T)
    if k[0] == 2 or lam > 0:
        if np.linalg.eigvalsh(info)[0] <= 0:
            raise SingularInformation("quadrature information is not positive definite")
    return info


def expmix_fisher_info(theta: ParameterPoint, n: int, n_nodes=64, n_laguerre=64) -> np.ndarray:
    """Covariance of the ordinary score; rank one on the line ``lam = 0``."""
    lam, psi = _unpack(theta)
    if lam == 0.0:
        return n * np.array([[0.0, 0.0], [0.0, 2.0 / psi**2]])
    info = expected_outer(lam, psi, lambda t: expmix_score_obs(lam, psi, t, n_nodes=n_nodes), n_nodes, n_laguerre)
    return n * 0.5 * (info + info.T)


def expmix_simulate(theta: ParameterPoint, n: int, seed: int) -> ExpMixData:
    lam, psi = _unpack(theta)
    groups = np.arange(n)
    w = SQRT3 * (2.0 * group_uniforms(seed, groups, 1, tag=0)[:, 0] - 1.0)
    u = group_uniforms(seed, groups, 2, tag=1)
    return ExpMixData(-np.log(u) / (psi + lam * w)[:, None])


def _unpack(theta: ParameterPoint):
    if theta.d1 != 1 or theta.d2 != 1 or theta.sigma is not None:
        raise DomainError("exponential mixed model has parameters (lam, psi)")
    return _check_theta(theta.lam[0], theta.psi[0])


class ExpMixModel:
    """:class:`~critscore.core.ScoreModel` adapter with flat order ``(lam, psi)``."""

    def __init__(self, n_nodes: int = 64, n_laguerre: int = 64):
        self.n_nodes = n_nodes
        self.n_laguerre = n_laguerre

    def group_scores(self, theta, pattern, data: ExpMixData) -> np.ndarray:
        lam, psi = _unpack(theta)
        return expmix_modified_score_obs(lam, psi, data.ybul, pattern.k, self.n_nodes)

    def modified_info(self, theta, pattern, data: ExpMixData) -> np.ndarray:
        return expmix_modified_info(theta, data.n, pattern, self.n_nodes, self.n_laguerre)

    def fisher_info(self, theta, data: ExpMixData) -> np.ndarray:
        return expmix_fisher_info(theta, data.n, self.n_nodes, self.n_laguerre)

    def loglik(self, theta, data: ExpMixData) -> float:
        return expmix_loglik(theta, data)

    def simulate(self, theta, n: int, seed: int) -> ExpMixData:
        return expmix_simulate(theta, n, seed)
