"""Random-intercept normal model ``Y_ij = theta * W_i + E_ij`` with unit error variance.

Everything is closed form, which makes it the exact oracle for the generic
machinery. With ``S_i = (y_i' 1_r)^2``, the score is
``theta / (1 + r theta^2) * (-r + S_i / (1 + r theta^2))`` and the second
derivative at zero is ``-r + S_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core import CriticalPattern, ParameterPoint
from ..exceptions import DomainError
from ..streams import group_normals

LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ToyData:
    y: np.ndarray

    def __post_init__(self):
        y = np.atleast_2d(np.asarray(self.y, dtype=float))
        if y.shape[0] < 1 or y.shape[1] < 1:
            raise DomainError("need n >= 1 groups and r >= 1 observations per group")
        if not np.all(np.isfinite(y)):
            raise DomainError("responses must be finite")
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def r(self) -> int:
        return self.y.shape[1]

    @property
    def sums_sq(self) -> np.ndarray:
        return self.y.sum(axis=1) ** 2


def _check(theta):
    theta = float(theta)
    if not theta >= 0:
        raise DomainError(f"theta must be nonnegative, got {theta}")
    return theta


def toy_loglik(theta, data: ToyData) -> float:
    theta = _check(theta)
    r, n = data.r, data.n
    c = 1.0 + r * theta**2
    quad = np.sum(data.y**2) - np.sum(data.sums_sq) * theta**2 / c
    return float(-0.5 * n * np.log(c) - 0.5 * quad - 0.5 * n * r * LOG_2PI)


def toy_group_score(theta, data: ToyData) -> np.ndarray:
    theta = _check(theta)
    c = 1.0 + data.r * theta**2
    return theta / c * (-data.r + data.sums_sq / c)


def toy_score(theta, data: ToyData) -> float:
    return float(toy_group_score(theta, data).sum())


def toy_modified_score(data: ToyData) -> float:
    """Second derivative of the log-likelihood at ``theta = 0``."""
    return float(np.sum(data.sums_sq - data.r))


def toy_statistic_closed_form(theta, data: ToyData) -> float:
    """``{-rn + sum S_i / (1 + r theta^2)}^2 / (2 r^2 n)``, defined for all ``theta >= 0``.

    Under the model at any ``theta`` this is distributed as ``(chi2_n - n)^2 / (2n)``.
    """
    theta = _check(theta)
    r, n = data.r, data.n
    inner = -r * n + np.sum(data.sums_sq) / (1.0 + r * theta**2)
    return float(inner**2 / (2.0 * r**2 * n))


def toy_simulate(theta, n: int, r: int, seed: int) -> ToyData:
    theta = _check(theta)
    groups = np.arange(n)
    w = group_normals(seed, groups, 1, tag=0)
    e = group_normals(seed, groups, r, tag=1)
    return ToyData(theta * w + e)


class ToyModel:
    """:class:`~critscore.core.ScoreModel` adapter; ``theta.lam[0]`` is the scale."""

    @staticmethod
    def _theta(theta: ParameterPoint) -> float:
        if theta.d1 != 1 or theta.d2 != 0 or theta.sigma is not None:
            raise DomainError("toy model has exactly one scale parameter")
        return float(theta.lam[0])

    def group_scores(self, theta: ParameterPoint, pattern: CriticalPattern, data: ToyData) -> np.ndarray:
        t = self._theta(theta)
        if pattern.k[0] == 2:
            return (data.sums_sq - data.r)[:, None]
        return toy_group_score(t, data)[:, None]

    def modified_info(self, theta: ParameterPoint, pattern: CriticalPattern, data: ToyData) -> np.ndarray:
        t = self._theta(theta)
        r, n = data.r, data.n
        if pattern.k[0] == 2:
            return np.array([[2.0 * r**2 * n]])
        c = 1.0 + r * t**2
        return np.array([[2.0 * r**2 * n * t**2 / c**2]])

    def fisher_info(self, theta: ParameterPoint, data: ToyData) -> np.ndarray:
        t = self._theta(theta)
        c = 1.0 + data.r * t**2
        return np.array([[2.0 * data.r**2 * data.n * t**2 / c**2]])

    def loglik(self, theta: ParameterPoint, data: ToyData) -> float:
        return toy_loglik(self._theta(theta), data)

    def simulate(self, theta: ParameterPoint, n: int, seed: int, r: int = 1) -> ToyData:
        return toy_simulate(self._theta(theta), n, r, seed)
