"""Confidence sets by test inversion over grids and 1-D scans."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .chisq import chisq_quantile
from .core import ParameterPoint, ScoreModel, modified_statistic, subvector_statistic
from .exceptions import DomainError, EmptyRegion, SingularInformation


@dataclass
class RegionGrid:
    axes: tuple[np.ndarray, ...]
    interest: tuple[int, ...]
    statistic: np.ndarray
    df: int
    levels: tuple[float, ...]
    membership: dict[float, np.ndarray]
    singular: np.ndarray

    def critical_value(self, level: float) -> float:
        return chisq_quantile(self.df, level)

    def rows(self):
        """Long-format rows ``(*coords, statistic, *in_level)`` in C order."""
        for idx in itertools.product(*(range(a.size) for a in self.axes)):
            coords = [float(a[i]) for a, i in zip(self.axes, idx)]
            flags = [bool(self.membership[lv][idx]) for lv in self.levels]
            yield coords, float(self.statistic[idx]), flags


def _stat_at(model, theta, data, interest, zero_tol, efficient_score=False):
    if len(interest) == theta.dim:
        return modified_statistic(model, theta, data, zero_tol=zero_tol).statistic
    return subvector_statistic(model, theta, data, interest, zero_tol=zero_tol,
                               efficient_score=efficient_score).statistic


def invert_region(model: ScoreModel, data, interest: Sequence[int], nuisance_values: ParameterPoint,
                  grid_axes: Sequence[Sequence[float]], levels: Sequence[float] = (0.8, 0.9, 0.95, 0.99),
                  zero_tol: float = 0.0) -> RegionGrid:
    """Evaluate the statistic on a lattice over ``interest`` and threshold it.

    Entries of ``nuisance_values`` outside ``interest`` stay fixed. Points where
    the information check fails are recorded in ``singular`` and excluded from
    every level set.
    """
    interest = tuple(int(j) for j in interest)
    if len(interest) != len(grid_axes) or not interest:
        raise DomainError("need one grid axis per interest index")
    axes = []
    for j, ax in zip(interest, grid_axes):
        ax = np.asarray(ax, dtype=float)
        if ax.ndim != 1 or ax.size == 0 or np.any(np.diff(ax) <= 0):
            raise DomainError("grid axes must be nonempty and strictly increasing")
        if nuisance_values.is_scale_index(j) and ax[0] < 0:
            raise DomainError("scale-parameter axis must be nonnegative")
        axes.append(ax)
    levels = tuple(sorted(float(lv) for lv in levels))
    shape = tuple(a.size for a in axes)
    stat = np.full(shape, np.nan)
    singular = np.zeros(shape, dtype=bool)
    for idx in itertools.product(*(range(n) for n in shape)):
        point = nuisance_values.with_flat(interest, [a[i] for a, i in zip(axes, idx)])
        try:
            stat[idx] = _stat_at(model, point, data, interest, zero_tol)
        except SingularInformation:
            singular[idx] = True
    df = len(interest)
    membership = {}
    for lv in levels:
        crit = chisq_quantile(df, lv)
        with np.errstate(invalid="ignore"):
            membership[lv] = np.where(singular, False, stat <= crit)
    return RegionGrid(tuple(axes), interest, stat, df, levels, membership, singular)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float
    disconnected: bool
    segments: tuple[tuple[float, float], ...]
    lower_truncated: bool = False
    upper_truncated: bool = False

    def to_dict(self) -> dict:
        return {
            "lo": self.lo,
            "hi": self.hi,
            "disconnected": self.disconnected,
            "segments": [list(s) for s in self.segments],
            "lower_truncated": self.lower_truncated,
            "upper_truncated": self.upper_truncated,
        }


def _bisect(fn, crit, accepted_x, rejected_x, tol):
    a, b = accepted_x, rejected_x
    while abs(b - a) > tol:
        mid = 0.5 * (a + b)
        val = fn(mid)
        if np.isfinite(val) and val <= crit:
            a = mid
        else:
            b = mid
    return a


def invert_scalar(fn: Callable[[float], float], critical: float, scan: Sequence[float],
                  refine_tol: float = 1e-6, domain_lo: float | None = None) -> Interval:
    """Accepted set ``{x : fn(x) <= critical}`` from a scan plus bisection.

    No convexity is assumed: every accept/reject transition along the scan is
    refined and the hull is returned with a flag when the set has several pieces.
    A scan end that is still accepted is reported as truncated unless it sits on
    ``domain_lo``.
    """
    xs = np.asarray(scan, dtype=float)
    vals = np.array([fn(x) for x in xs])
    ok = np.isfinite(vals) & (vals <= critical)
    if not ok.any():
        raise EmptyRegion(f"no scan point in [{xs[0]:.6g}, {xs[-1]:.6g}] has statistic <= {critical:.6g}")
    segments = []
    i = 0
    n = xs.size
    while i < n:
        if not ok[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and ok[j + 1]:
            j += 1
        lo = xs[i] if i == 0 else _bisect(fn, critical, xs[i], xs[i - 1], refine_tol)
        hi = xs[j] if j == n - 1 else _bisect(fn, critical, xs[j], xs[j + 1], refine_tol)
        segments.append((float(lo), float(hi)))
        i = j + 1
    lower_trunc = bool(ok[0]) and not (domain_lo is not None and xs[0] <= domain_lo)
    upper_trunc = bool(ok[-1])
    return Interval(segments[0][0], segments[-1][1], len(segments) > 1, tuple(segments),
                    lower_trunc, upper_trunc)


def componentwise_interval(model: ScoreModel, data, index: int, level: float, scan_range: tuple[float, float],
                           refine_tol: float, theta: ParameterPoint, n_scan: int = 50,
                           zero_tol: float = 0.0, efficient_score: bool = False) -> Interval:
    """Interval for one flat coordinate with all others held at ``theta``."""
    lo, hi = map(float, scan_range)
    if not hi > lo:
        raise DomainError("scan range must have hi > lo")
    is_scale = theta.is_scale_index(index)
    if is_scale and lo < 0:
        raise DomainError("scan range for a scale parameter must be nonnegative")
    sigma_index = theta.sigma is not None and index == theta.dim - 1
    if sigma_index and lo <= 0:
        raise DomainError("scan range for sigma must be positive")
    crit = chisq_quantile(1, level)

    def fn(x):
        try:
            return _stat_at(model, theta.with_flat([index], [x]), data, (index,), zero_tol, efficient_score)
        except SingularInformation:
            return np.nan

    return invert_scalar(fn, crit, np.linspace(lo, hi, n_scan), refine_tol,
                         domain_lo=0.0 if is_scale else None)
