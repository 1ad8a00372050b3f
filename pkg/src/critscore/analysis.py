"""Componentwise intervals for a fitted mixed model: modified score, Wald, profile LRT."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .chisq import chisq_quantile
from .core import ParameterPoint
from .exceptions import CritScoreError, DomainError, EmptyRegion, NonOrthogonalNuisanceWarning
from .models.lmm import LmmData, LmmModel, MleResult, lmm_fisher_info, lmm_mle, lmm_modified_info
from .regions import Interval, componentwise_interval, invert_scalar

METHODS = ("score", "wald", "lrt")


@dataclass
class ParamSummary:
    name: str
    index: int
    estimate: float
    intervals: dict
    notes: list

    def to_dict(self) -> dict:
        return {"name": self.name, "index": self.index, "estimate": self.estimate,
                "intervals": {k: (v.to_dict() if isinstance(v, Interval) else v) for k, v in self.intervals.items()},
                "notes": list(self.notes)}


def parameter_names(data: LmmData, with_sigma: bool) -> list[str]:
    names = []
    for j in range(data.d1):
        terms = [t for t, s in zip(data.z_names, data.scale_map) if s == j]
        names.append(f"lambda{j + 1}[{'+'.join(terms)}]")
    names += [f"psi[{t}]" for t in data.x_names]
    if with_sigma:
        names.append("sigma")
    return names


def _default_range(data: LmmData, fit: MleResult, index: int):
    d1, p = data.d1, data.p
    if index < d1:
        zz = float(np.mean(np.sum(data.Z[:, data.scale_map == index] ** 2, axis=1)))
        spread = float(np.std(data.y)) / np.sqrt(max(zz, 1e-12))
        return 0.0, max(3.0 * fit.lam[index], 0.25 * spread, 1e-8)
    if index < d1 + p:
        k = index - d1
        info = lmm_modified_info(ParameterPoint(fit.lam, fit.psi), data, fit.sigma).psi_block
        se = float(np.sqrt(np.linalg.inv(info)[k, k]))
        return fit.psi[k] - 6.0 * se, fit.psi[k] + 6.0 * se
    return 0.6 * fit.sigma, 1.6 * fit.sigma


def _grow(rng, index, d1, p, interval: Interval):
    lo, hi = rng
    width = hi - lo
    if interval.upper_truncated:
        hi += width
    if interval.lower_truncated:
        lo = lo - width if index < d1 + p else max(lo * 0.5, 1e-12)
        if index < d1:
            lo = 0.0
    return lo, hi


def _with_growth(fn, rng, index, d1, p, tries=6):
    out = fn(rng)
    for _ in range(tries):
        if not (out.upper_truncated or out.lower_truncated):
            break
        rng = _grow(rng, index, d1, p, out)
        out = fn(rng)
    return out


def score_interval(data, fit, index, level, model, rng=None, n_scan=60):
    rng = rng or _default_range(data, fit, index)
    theta = fit.theta
    # fixed effects are often strongly correlated; residualize their score on the others
    eff = data.d1 <= index < data.d1 + data.p

    def one(r):
        return componentwise_interval(model, data, index, level, r, 1e-7 * (r[1] - r[0]), theta, n_scan,
                                      efficient_score=eff)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", NonOrthogonalNuisanceWarning)
        out = _with_growth(one, rng, index, data.d1, data.p)
    hetero = not eff and any(issubclass(w.category, NonOrthogonalNuisanceWarning) for w in caught)
    return out, hetero


def wald_interval(data, fit, index, level):
    """``est +/- z se`` from the expected information at the estimate.

    Coordinates with ``lam_hat_j = 0`` carry a zero information row; they are
    removed, and the interval for such a coordinate itself is undefined.
    """
    d1 = data.d1
    if index < d1 and fit.lam[index] <= 0:
        return None
    info = lmm_fisher_info(fit.theta, data, fit.sigma)
    keep = [j for j in range(info.shape[0]) if j >= d1 or fit.lam[j] > 0]
    sub = info[np.ix_(keep, keep)]
    cov = np.linalg.inv(sub)
    pos = keep.index(index)
    se = float(np.sqrt(cov[pos, pos]))
    z = float(np.sqrt(chisq_quantile(1, level)))
    est = float(fit.theta.flat()[index])
    lo, hi = est - z * se, est + z * se
    if index < d1 or (not fit.sigma_known and index == info.shape[0] - 1):
        lo = max(lo, 0.0)
    return Interval(lo, hi, False, ((lo, hi),))


def _drop_column(data: LmmData, k: int, value: float) -> LmmData:
    keep = [c for c in range(data.p) if c != k]
    y = data.y - value * data.X[:, k]
    return LmmData(y, data.X[:, keep], data.Z, data.offsets, data.scale_map, data.labels,
                   tuple(data.x_names[c] for c in keep), data.z_names)


def profile_loglik(data: LmmData, fit: MleResult, index: int, value: float) -> float:
    """Log-likelihood maximized over everything except flat coordinate ``index``."""
    d1, p = data.d1, data.p
    sk = fit.sigma if fit.sigma_known else None
    if index < d1:
        if value < 0:
            raise DomainError("scale value must be nonnegative")
        return lmm_mle(data, sk, fixed={index: value}).loglik
    if index < d1 + p:
        return lmm_mle(_drop_column(data, index - d1, value), sk).loglik
    if value <= 0:
        raise DomainError("sigma must be positive")
    return lmm_mle(data, None, fixed={"sigma": value}).loglik


def lrt_interval(data, fit, index, level, rng=None, n_scan=25):
    rng = rng or _default_range(data, fit, index)
    crit = chisq_quantile(1, level)

    def stat(x):
        try:
            return 2.0 * (fit.loglik - profile_loglik(data, fit, index, x))
        except CritScoreError:
            return np.nan

    def one(r):
        return invert_scalar(stat, crit, np.linspace(r[0], r[1], n_scan), 1e-6 * (r[1] - r[0]),
                             domain_lo=0.0 if index < data.d1 else None)

    return _with_growth(one, rng, index, data.d1, data.p)


def componentwise_table(data: LmmData, fit: MleResult, level: float = 0.95, methods=METHODS,
                        indices=None) -> list[ParamSummary]:
    for m in methods:
        if m not in METHODS:
            raise DomainError(f"unknown method {m!r}")
    with_sigma = not fit.sigma_known
    names = parameter_names(data, with_sigma)
    model = LmmModel(sigma_known=fit.sigma if fit.sigma_known else None)
    flat = fit.theta.flat()
    out = []
    for idx in (range(len(names)) if indices is None else indices):
        notes = []
        iv = {}
        rng = _default_range(data, fit, idx)
        if "score" in methods:
            try:
                iv["score"], hetero = score_interval(data, fit, idx, level, model, rng)
                if hetero:
                    notes.append("score: nuisance block not orthogonal, plug-in standardization is heuristic")
            except EmptyRegion as exc:
                iv["score"] = None
                notes.append(f"score: {exc}")
        if "wald" in methods:
            try:
                iv["wald"] = wald_interval(data, fit, idx, level)
            except (np.linalg.LinAlgError, CritScoreError) as exc:
                iv["wald"] = None
                notes.append(f"wald: {exc}")
            if iv["wald"] is None and idx < data.d1:
                notes.append("wald: information is singular at the estimate (estimate on the boundary)")
        if "lrt" in methods:
            try:
                iv["lrt"] = lrt_interval(data, fit, idx, level, rng)
            except EmptyRegion as exc:
                iv["lrt"] = None
                notes.append(f"lrt: {exc}")
        out.append(ParamSummary(names[idx], idx, float(flat[idx]), iv, notes))
    return out
