"""Gaussian linear mixed model with diagonal random-effect scales.

Group ``i`` has ``Y_i = X_i psi + Z_i Lambda W_i + E_i`` with ``W_i`` standard
normal, ``E_i ~ N(0, sigma^2 I)`` and ``Lambda = diag(lam[scale_map])``, so
``Sigma_i = sigma^2 I + sum_j lam_j^2 H_j`` where ``H_j`` sums the outer
products of the ``Z`` columns tied to ``lam_j``.

The scale derivative factors as ``d l / d lam_j = lam_j xi_j`` with

    xi_j = sum_i [ e_i' Q_i H_j Q_i e_i - tr(Q_i H_j) ],   Q_i = Sigma_i^{-1},

and ``xi_j`` is also the second derivative at ``lam_j = 0``. Working with
``xi`` and its covariance ``C`` instead of ``lam * xi`` and ``D C D`` gives the
continuous extension of the score statistic without any switching near zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from ..core import (CriticalPattern, ParameterPoint, TestResult, critical_pattern,
                    quadratic_form_inverse, schur_complement)
from ..chisq import chisq_sf
from ..exceptions import DomainError, RankDeficientDesign
from . import _lmm_kernels as kern


@dataclass(frozen=True, eq=False)
class LmmData:
    """Stacked rows of all groups; group ``i`` is ``slice(offsets[i], offsets[i+1])``.

    ``scale_map[k]`` is the (0-based) scale parameter of ``Z`` column ``k``.
    """

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    offsets: np.ndarray
    scale_map: np.ndarray
    labels: tuple = ()
    x_names: tuple = ()
    z_names: tuple = ()

    def __post_init__(self):
        y = np.ascontiguousarray(self.y, dtype=np.float64).ravel()
        X = np.ascontiguousarray(np.atleast_2d(np.asarray(self.X, dtype=np.float64).T).T)
        Z = np.ascontiguousarray(np.atleast_2d(np.asarray(self.Z, dtype=np.float64).T).T)
        offsets = np.asarray(self.offsets, dtype=np.int64)
        smap = np.asarray(self.scale_map, dtype=np.int64).ravel()
        if X.shape[0] != y.size or Z.shape[0] != y.size:
            raise DomainError("y, X and Z must have the same number of rows")
        if offsets.ndim != 1 or offsets.size < 2 or offsets[0] != 0 or offsets[-1] != y.size:
            raise DomainError("offsets must run from 0 to the number of rows")
        if np.any(np.diff(offsets) < 1):
            raise DomainError("every group needs at least one row")
        if smap.size != Z.shape[1] or Z.shape[1] == 0:
            raise DomainError("scale_map needs one entry per Z column")
        if smap.min() != 0 or set(smap.tolist()) != set(range(smap.max() + 1)):
            raise DomainError("scale_map must use every scale index 0..d1-1")
        for arr in (y, X, Z):
            if not np.all(np.isfinite(arr)):
                raise DomainError("data must be finite")
        n = offsets.size - 1
        labels = tuple(self.labels) if len(self.labels) else tuple(range(n))
        if len(labels) != n:
            raise DomainError("one label per group")
        for name, val in (("y", y), ("X", X), ("Z", Z), ("offsets", offsets), ("scale_map", smap)):
            val.flags.writeable = False
            object.__setattr__(self, name, val)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "x_names", tuple(self.x_names) or tuple(f"x{j}" for j in range(X.shape[1])))
        object.__setattr__(self, "z_names", tuple(self.z_names) or tuple(f"z{k}" for k in range(Z.shape[1])))

    @classmethod
    def from_groups(cls, groups: Sequence[tuple], scale_map, labels=(), x_names=(), z_names=()) -> "LmmData":
        """Build from ``[(y_i, X_i, Z_i), ...]``."""
        if len(groups) == 0:
            raise DomainError("need at least one group")
        ys, Xs, Zs = [], [], []
        for y_i, X_i, Z_i in groups:
            y_i = np.asarray(y_i, dtype=float).ravel()
            X_i = np.asarray(X_i, dtype=float).reshape(y_i.size, -1)
            Z_i = np.asarray(Z_i, dtype=float).reshape(y_i.size, -1)
            ys.append(y_i)
            Xs.append(X_i)
            Zs.append(Z_i)
        p = {X_i.shape[1] for X_i in Xs}
        q = {Z_i.shape[1] for Z_i in Zs}
        if len(p) != 1 or len(q) != 1:
            raise DomainError("all groups need the same number of X and Z columns")
        offsets = np.concatenate([[0], np.cumsum([y_i.size for y_i in ys])])
        return cls(np.concatenate(ys), np.vstack(Xs), np.vstack(Zs), offsets, scale_map,
                   labels, x_names, z_names)

    @property
    def n(self) -> int:
        return self.offsets.size - 1

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Z.shape[1]

    @property
    def d1(self) -> int:
        return int(self.scale_map.max()) + 1

    @property
    def sizes(self) -> np.ndarray:
        return np.diff(self.offsets)

    def group(self, i: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        s = slice(self.offsets[i], self.offsets[i + 1])
        return self.y[s], self.X[s], self.Z[s]

    def subset(self, indices: Sequence[int]) -> "LmmData":
        idx = [int(i) for i in indices]
        return LmmData.from_groups([self.group(i) for i in idx], self.scale_map,
                                   [self.labels[i] for i in idx], self.x_names, self.z_names)

    def with_y(self, y) -> "LmmData":
        return LmmData(y, self.X, self.Z, self.offsets, self.scale_map, self.labels, self.x_names, self.z_names)

    @cached_property
    def stats(self) -> tuple:
        """Per-group ``(Z'Z, Z'X, Z'y, X'X, X'y, y'y, r)`` as contiguous float arrays."""
        starts = self.offsets[:-1]
        X, Z, y = self.X, self.Z, self.y

        def red(a):
            return np.ascontiguousarray(np.add.reduceat(a, starts, axis=0))

        return (red(np.einsum("ia,ib->iab", Z, Z)), red(np.einsum("ia,ic->iac", Z, X)),
                red(Z * y[:, None]), red(np.einsum("ic,ie->ice", X, X)), red(X * y[:, None]),
                red(y * y), self.sizes.astype(np.float64))

    @cached_property
    def ols_cross(self) -> tuple[np.ndarray, np.ndarray]:
        return self.X.T @ self.X, self.X.T @ self.y


def build_sigma(lam, sigma: float, Z_i, scale_map) -> tuple[np.ndarray, list[np.ndarray]]:
    """Dense ``Sigma_i`` and the factors ``H_j`` for one group."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    lam = np.asarray(lam, dtype=float)
    Z_i = np.atleast_2d(np.asarray(Z_i, dtype=float))
    smap = np.asarray(scale_map)
    H = []
    for j in range(lam.size):
        cols = Z_i[:, smap == j]
        H.append(cols @ cols.T)
    Sigma = sigma**2 * np.eye(Z_i.shape[0])
    for lj, Hj in zip(lam, H):
        Sigma = Sigma + lj**2 * Hj
    return Sigma, H


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------


def _sigma_of(theta: ParameterPoint, sigma) -> float:
    s = theta.sigma if theta.sigma is not None else sigma
    if s is None:
        raise DomainError("sigma is neither in theta nor supplied")
    s = float(s)
    if not s > 0:
        raise DomainError("sigma must be positive")
    return s


def _check_dims(theta: ParameterPoint, data: LmmData):
    if theta.d1 != data.d1 or theta.d2 != data.p:
        raise DomainError(f"theta has (d1, d2) = ({theta.d1}, {theta.d2}); data needs ({data.d1}, {data.p})")


@dataclass(frozen=True)
class GroupTerms:
    loglik: np.ndarray
    xi: np.ndarray
    s_psi: np.ndarray
    s_sigma: np.ndarray
    C: np.ndarray
    C_sigma: np.ndarray
    V_sigma: float
    psi_info: np.ndarray


def lmm_group_terms(theta: ParameterPoint, data: LmmData, sigma: float | None = None) -> GroupTerms:
    _check_dims(theta, data)
    s = _sigma_of(theta, sigma)
    ld = theta.lam[data.scale_map]
    out = kern.group_terms(ld, s, theta.psi, data.scale_map, data.d1, data.stats)
    return GroupTerms(*out[:6], float(out[6]), out[7])


def lmm_loglik(theta: ParameterPoint, data: LmmData, sigma: float | None = None) -> float:
    return float(lmm_group_terms(theta, data, sigma).loglik.sum())


def lmm_xi(theta: ParameterPoint, data: LmmData, sigma: float | None = None) -> np.ndarray:
    """``xi``: the scale score divided by ``lam`` (the second derivative where ``lam_j = 0``)."""
    return lmm_group_terms(theta, data, sigma).xi.sum(axis=0)


def lmm_score(theta: ParameterPoint, data: LmmData, sigma: float | None = None,
              with_sigma: bool | None = None) -> np.ndarray:
    """Raw score ``(lam * xi, s_psi[, s_sigma])``."""
    t = lmm_group_terms(theta, data, sigma)
    parts = [theta.lam * t.xi.sum(axis=0), t.s_psi.sum(axis=0)]
    if with_sigma if with_sigma is not None else theta.sigma is not None:
        parts.append([t.s_sigma.sum()])
    return np.concatenate(parts)


@dataclass(frozen=True)
class InfoBlocks:
    """Covariance of ``(xi[, s_sigma])`` and of ``s_psi``; the cross blocks vanish."""

    lambda_block: np.ndarray
    psi_block: np.ndarray
    has_sigma: bool

    def full(self) -> np.ndarray:
        """Assembled in the flat order lam, psi, sigma."""
        a, b = self.lambda_block, self.psi_block
        d1 = a.shape[0] - self.has_sigma
        d2 = b.shape[0]
        d = d1 + d2 + self.has_sigma
        out = np.zeros((d, d))
        lam_idx = list(range(d1)) + ([d - 1] if self.has_sigma else [])
        out[np.ix_(lam_idx, lam_idx)] = a
        out[d1:d1 + d2, d1:d1 + d2] = b
        return out

    @property
    def cross(self) -> np.ndarray:
        return np.zeros((self.lambda_block.shape[0], self.psi_block.shape[0]))


def _info_from_terms(t: GroupTerms, with_sigma: bool) -> InfoBlocks:
    if with_sigma:
        d1 = t.C.shape[0]
        lb = np.empty((d1 + 1, d1 + 1))
        lb[:d1, :d1] = t.C
        lb[:d1, d1] = lb[d1, :d1] = t.C_sigma
        lb[d1, d1] = t.V_sigma
    else:
        lb = t.C.copy()
    return InfoBlocks(lb, t.psi_info.copy(), with_sigma)


def lmm_modified_info(theta: ParameterPoint, data: LmmData, sigma: float | None = None,
                      with_sigma: bool | None = None) -> InfoBlocks:
    """Covariance of the cancelled score ``(xi, s_psi[, s_sigma])``.

    ``C_jl = 2 sum_i tr(Q_i H_j Q_i H_l)``, ``cov(xi_j, s_sigma) = 2 sigma sum_i tr(Q_i^2 H_j)``
    and ``var(s_sigma) = 2 sigma^2 sum_i tr(Q_i^2)``, all from
    ``cov(e'Ae, e'Be) = 2 tr(A Sigma B Sigma)``. None depend on ``psi``.
    """
    if with_sigma is None:
        with_sigma = theta.sigma is not None
    return _info_from_terms(lmm_group_terms(theta, data, sigma), with_sigma)


def lmm_fisher_info(theta: ParameterPoint, data: LmmData, sigma: float | None = None,
                    with_sigma: bool | None = None) -> np.ndarray:
    """Raw expected information in the flat order; singular wherever some ``lam_j = 0``."""
    blocks = lmm_modified_info(theta, data, sigma, with_sigma)
    full = blocks.full()
    d1 = theta.d1
    scale = np.ones(full.shape[0])
    scale[:d1] = theta.lam
    return full * np.outer(scale, scale)


def lmm_modified_statistic_lambda(lam, psi_hat, data: LmmData, sigma: float,
                                  sigma_nuisance: bool = False) -> TestResult:
    """``xi' C^{-1} xi`` at ``(lam, psi_hat)`` with ``df = d1``.

    With ``sigma_nuisance`` the ``xi`` block is standardized by its efficient
    information after removing the ``sigma`` direction.
    """
    theta = ParameterPoint(lam, psi_hat)
    t = lmm_group_terms(theta, data, sigma)
    xi = t.xi.sum(axis=0)
    if sigma_nuisance:
        info = _info_from_terms(t, True).lambda_block
        C = schur_complement(info, range(theta.d1))
    else:
        C = t.C
    stat, cond = quadratic_form_inverse(C, xi, "scale information")
    stat = max(stat, 0.0)
    pattern = critical_pattern(theta)
    return TestResult(stat, theta.d1, chisq_sf(theta.d1, stat), pattern, cond)


# ---------------------------------------------------------------------------
# estimation
# ---------------------------------------------------------------------------


def _solve_spd(A, b, what):
    if A.shape[0] == 0:
        return np.zeros(0)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError:
        raise RankDeficientDesign(f"{what} is not positive definite; check the fixed-effect design") from None
    d = np.diag(L)
    if d.min() <= 1e-10 * d.max():
        raise RankDeficientDesign(f"{what} is numerically singular; check the fixed-effect design")
    return np.linalg.solve(L.T, np.linalg.solve(L, b))


def lmm_ols(data: LmmData) -> np.ndarray:
    XtX, Xty = data.ols_cross
    return _solve_spd(XtX, Xty, "X'X")


def lmm_profile(lam, sigma: float, data: LmmData) -> tuple[float, np.ndarray]:
    """Log-likelihood maximized over ``psi`` at fixed ``(lam, sigma)`` and the GLS maximizer."""
    ld = np.asarray(lam, dtype=float)[data.scale_map]
    logdet, yQy, XQy, XQX = kern.profile_terms(ld, sigma * sigma, data.stats)
    if not np.isfinite(logdet):
        raise DomainError("covariance factorization failed")
    psi = _solve_spd(XQX, XQy, "X' Sigma^{-1} X")
    quad = yQy - XQy @ psi
    return float(-0.5 * (data.y.size * kern.LOG_2PI + logdet + quad)), psi


def lmm_gls(lam, sigma: float, data: LmmData) -> np.ndarray:
    return lmm_profile(lam, sigma, data)[1]


def lmm_sigma_profile(lam, data: LmmData, psi=None, bracket=(1e-4, 1e4)) -> tuple[float, float]:
    """Maximize over ``sigma`` (and ``psi`` by GLS unless ``psi`` is given); returns ``(sigma, loglik)``."""
    if psi is None:
        def nll(u):
            return -lmm_profile(lam, np.exp(u), data)[0]
    else:
        theta = ParameterPoint(lam, psi)

        def nll(u):
            return -lmm_loglik(theta, data, np.exp(u))
    sd = max(float(np.std(data.y)), 1e-8)
    lo, hi = np.log(bracket[0] * sd), np.log(bracket[1] * sd)
    res = minimize_scalar(nll, bounds=(lo, hi), method="bounded", options={"xatol": 1e-10})
    return float(np.exp(res.x)), float(-res.fun)


@dataclass(frozen=True)
class MleResult:
    lam: np.ndarray
    psi: np.ndarray
    sigma: float
    loglik: float
    converged: bool
    grad_norm: float
    n_evals: int
    sigma_known: bool

    @property
    def theta(self) -> ParameterPoint:
        return ParameterPoint(self.lam, self.psi, None if self.sigma_known else self.sigma)


def _moment_start(data: LmmData, sigma_known):
    e = data.y - data.X @ lmm_ols(data)
    v = float(e @ e / max(data.y.size - data.p, 1))
    if sigma_known is not None:
        s2 = sigma_known**2
    else:
        # pooled within-group residual variance
        ss, dof = 0.0, 0
        for i in range(data.n):
            seg = e[data.offsets[i]:data.offsets[i + 1]]
            if seg.size > 1:
                ss += float(np.sum((seg - seg.mean()) ** 2))
                dof += seg.size - 1
        s2 = ss / dof if dof else 0.5 * v
        s2 = min(max(s2, 1e-3 * v), v)
    excess = max(v - s2, 0.05 * v)
    lam0 = np.empty(data.d1)
    width = np.empty(data.d1)
    for j in range(data.d1):
        zz = float(np.mean(np.sum(data.Z[:, data.scale_map == j] ** 2, axis=1)))
        zz = max(zz, 1e-12)
        lam0[j] = np.sqrt(excess / data.d1 / zz)
        width[j] = np.sqrt(v / zz)
    return lam0, float(np.sqrt(s2)), width


def lmm_mle(data: LmmData, sigma_known: float | None = None, fixed: dict | None = None,
            gtol: float = 1e-6, maxfev: int = 3000, xatol: float = 1e-5) -> MleResult:
    """Maximum likelihood by Nelder-Mead over ``(lam[, log sigma])`` with ``psi`` profiled.

    ``lam`` is clamped at zero inside the objective. Starts: a moment estimate
    from OLS residuals, half of it, and ``lam = 0``; the best end point is then
    polished by projected Fisher scoring. ``fixed`` maps scale indices (and
    optionally ``"sigma"``) to held values for profile likelihoods.
    ``converged`` reports whether the projected gradient, measured per
    standard-error unit of each coordinate, is below ``gtol`` relative to
    ``max(1, |loglik|)``.
    """
    fixed = dict(fixed or {})
    d1 = data.d1
    fix_sigma = sigma_known is not None or "sigma" in fixed
    sig_fixed = float(sigma_known if sigma_known is not None else fixed.get("sigma", np.nan))
    fix_lam = {int(k): float(v) for k, v in fixed.items() if k != "sigma"}
    if any(v < 0 for v in fix_lam.values()):
        raise DomainError("fixed scale values must be nonnegative")
    free_lam = [j for j in range(d1) if j not in fix_lam]
    lam0, s0, width = _moment_start(data, sigma_known)

    def unpack(x):
        lam = np.empty(d1)
        for j, v in fix_lam.items():
            lam[j] = v
        lam[free_lam] = np.maximum(x[:len(free_lam)], 0.0)
        sigma = sig_fixed if fix_sigma else float(np.exp(x[-1]))
        return lam, sigma

    n_evals = 0

    def nll(x):
        nonlocal n_evals
        n_evals += 1
        lam, sigma = unpack(x)
        try:
            return -lmm_profile(lam, sigma, data)[0]
        except (DomainError, RankDeficientDesign):
            return np.inf

    def pack(lam, sigma):
        x = list(lam[free_lam])
        if not fix_sigma:
            x.append(np.log(sigma))
        return np.array(x, dtype=float)

    starts = [pack(lam0, s0), pack(0.5 * lam0, s0), pack(np.zeros(d1), np.sqrt(s0**2 + np.sum(lam0**2)))]
    m = starts[0].size
    steps = np.concatenate([0.25 * width[free_lam], [0.3] if not fix_sigma else []])

    def run_nm(x0):
        simplex = np.vstack([x0] + [x0 + steps[k] * np.eye(m)[k] for k in range(m)])
        res = minimize(nll, x0, method="Nelder-Mead",
                       options={"initial_simplex": simplex, "xatol": xatol, "fatol": 1e-9, "maxfev": maxfev})
        return float(res.fun), res.x.copy()

    if m == 0:
        best = (nll(np.zeros(0)), np.zeros(0))
    else:
        best = min((run_nm(x0) for x0 in starts), key=lambda t: t[0])
    lam, sigma = unpack(best[1])
    lam, sigma, ll, gnorm = _polish(data, lam, sigma, free_lam, fix_sigma)
    # lam_j = 0 is stationary for every data set; leave it when the curvature there is positive
    for _ in range(len(free_lam)):
        kick = _boundary_escape(data, lam, sigma, free_lam)
        if kick is None:
            break
        cand = lam.copy()
        cand[kick[0]] = kick[1]
        val, x = run_nm(pack(cand, sigma))
        if not -val > ll:
            break
        lam2, sigma2, ll2, gnorm2 = _polish(data, *unpack(x), free_lam, fix_sigma)
        if ll2 <= ll:
            break
        lam, sigma, ll, gnorm = lam2, sigma2, ll2, gnorm2
    psi = lmm_gls(lam, sigma, data)
    conv = gnorm <= gtol * max(1.0, abs(ll))
    return MleResult(lam, psi, sigma, ll, bool(conv), gnorm, n_evals, sigma_known is not None)


def _boundary_curvature(data, lam, sigma, free_lam):
    """Profile curvature ``xi_j`` and ``C_jj`` for free coordinates sitting at zero."""
    _, psi = lmm_profile(lam, sigma, data)
    t = lmm_group_terms(ParameterPoint(lam, psi), data, sigma)
    xi = t.xi.sum(axis=0)
    return [(j, float(xi[j]), float(t.C[j, j])) for j in free_lam if lam[j] <= 0]


def _boundary_escape(data, lam, sigma, free_lam):
    """``(j, lam_j)`` from one scoring step in ``u = lam_j^2`` for the steepest boundary ascent."""
    cand = [(x / np.sqrt(c), j, np.sqrt(2.0 * x / c)) for j, x, c in _boundary_curvature(data, lam, sigma, free_lam)
            if x > 0 and c > 0]
    if not cand:
        return None
    _, j, val = max(cand)
    return j, val


def _projected_gradient(data, lam, sigma, free_lam, fix_sigma):
    ll, psi = lmm_profile(lam, sigma, data)
    t = lmm_group_terms(ParameterPoint(lam, psi), data, sigma)
    g = lam * t.xi.sum(axis=0)
    grad = [g[j] for j in free_lam]
    idx = list(free_lam)
    info = _info_from_terms(t, True).lambda_block
    scale = np.append(lam, 1.0)
    raw = info * np.outer(scale, scale)
    if not fix_sigma:
        grad.append(t.s_sigma.sum())
        idx.append(data.d1)
    grad = np.array(grad)
    # at the boundary only an ascent direction into the domain counts
    proj = grad.copy()
    for pos, j in enumerate(free_lam):
        if lam[j] <= 0 and proj[pos] < 0:
            proj[pos] = 0.0
    return ll, grad, proj, raw[np.ix_(idx, idx)], idx


def _polish(data, lam, sigma, free_lam, fix_sigma, max_iter=20):
    lam = lam.copy()
    ll, grad, proj, info, idx = _projected_gradient(data, lam, sigma, free_lam, fix_sigma)
    for _ in range(max_iter):
        if not proj.size or np.max(np.abs(proj)) <= 1e-12 * max(1.0, abs(ll)):
            break
        active = [k for k, j in enumerate(idx) if j == data.d1 or lam[j] > 0]
        if not active:
            break
        sub = info[np.ix_(active, active)]
        try:
            step = np.linalg.solve(sub, grad[active])
        except np.linalg.LinAlgError:
            break
        improved = False
        for shrink in (1.0, 0.5, 0.25, 0.125):
            new_lam, new_sigma = lam.copy(), sigma
            for k, s in zip(active, step):
                j = idx[k]
                if j == data.d1:
                    new_sigma = sigma + shrink * s
                else:
                    new_lam[j] = max(lam[j] + shrink * s, 0.0)
            if not new_sigma > 0:
                continue
            try:
                new_ll = lmm_profile(new_lam, new_sigma, data)[0]
            except (DomainError, RankDeficientDesign):
                continue
            if new_ll >= ll:
                improved = True
                break
        if not improved:
            break
        lam, sigma = new_lam, new_sigma
        ll, grad, proj, info, idx = _projected_gradient(data, lam, sigma, free_lam, fix_sigma)
    # gradient per standard-error unit, so the test does not depend on parameter units
    diag = np.diag(info) if proj.size else np.zeros(0)
    se = np.where(diag > 0, 1.0 / np.sqrt(np.where(diag > 0, diag, 1.0)), 1.0)
    gnorm = float(np.max(np.abs(proj) * se)) if proj.size else 0.0
    # on the boundary the slope in u = lam_j^2 is xi_j / 2 with standard error 2 / sqrt(C_jj)
    for _, x, c in _boundary_curvature(data, lam, sigma, free_lam):
        if x > 0 and c > 0:
            gnorm = max(gnorm, x / np.sqrt(c))
    return lam, sigma, ll, gnorm


@dataclass(frozen=True)
class WaldResult:
    statistic: float
    df: int
    kept: tuple[int, ...]
    degenerate: bool


def lmm_wald(lam, data: LmmData, fit: MleResult) -> WaldResult:
    """``(lam_hat - lam)' I^lam(theta_hat) (lam_hat - lam)``.

    Rows of ``I^lam`` vanish where ``lam_hat_j = 0``; those coordinates are
    dropped and the statistic is referred to chi-square with the reduced df.
    With unknown ``sigma`` the ``sigma`` direction is profiled out of ``I^lam``.
    """
    lam = np.asarray(lam, dtype=float)
    kept = tuple(j for j in range(data.d1) if fit.lam[j] > 0)
    if not kept:
        return WaldResult(0.0, 0, kept, True)
    t = lmm_group_terms(ParameterPoint(fit.lam, fit.psi), data, fit.sigma)
    scale = np.append(fit.lam, 1.0)
    raw = _info_from_terms(t, True).lambda_block * np.outer(scale, scale)
    if fit.sigma_known:
        info = raw[np.ix_(kept, kept)]
    else:
        sub = list(kept) + [data.d1]
        info = schur_complement(raw[np.ix_(sub, sub)], range(len(kept)))
    diff = (fit.lam - lam)[list(kept)]
    return WaldResult(float(diff @ info @ diff), len(kept), kept, len(kept) < data.d1)


def lmm_profile_at(lam, data: LmmData, sigma_known: float | None = None) -> float:
    """``max`` of the log-likelihood over ``psi`` (and ``sigma`` if unknown) at fixed ``lam``."""
    if sigma_known is not None:
        return lmm_profile(lam, sigma_known, data)[0]
    return lmm_sigma_profile(lam, data)[1]


def lmm_lrt(lam, data: LmmData, fit: MleResult) -> float:
    """``2 {l(theta_hat) - l(lam, psi~(lam)[, sigma~(lam)])}``."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise DomainError("scale parameters must be nonnegative")
    null = lmm_profile_at(lam, data, fit.sigma if fit.sigma_known else None)
    return 2.0 * (fit.loglik - null)


# ---------------------------------------------------------------------------
# ScoreModel adapter
# ---------------------------------------------------------------------------


class LmmModel:
    """:class:`~critscore.core.ScoreModel` adapter.

    With ``sigma_known`` set, ``theta`` carries ``(lam, psi)`` only; otherwise
    ``theta.sigma`` is required and adds the ``s_sigma`` row. With
    ``scale_cancel`` (the default) the regular scale columns are ``xi_j``
    rather than ``lam_j xi_j``; the statistic is the same wherever both exist.
    """

    def __init__(self, sigma_known: float | None = None, scale_cancel: bool = True):
        if sigma_known is not None and not sigma_known > 0:
            raise DomainError("sigma_known must be positive")
        self.sigma_known = None if sigma_known is None else float(sigma_known)
        self.scale_cancel = scale_cancel
        self._memo = None

    def _terms(self, theta: ParameterPoint, data: LmmData) -> GroupTerms:
        if (self.sigma_known is None) != (theta.sigma is not None):
            raise DomainError("theta.sigma must be set exactly when sigma is unknown")
        key = (id(data), theta.flat().tobytes())
        if self._memo is not None and self._memo[0] == key and self._memo[1] is data:
            return self._memo[2]
        t = lmm_group_terms(theta, data, self.sigma_known)
        self._memo = (key, data, t)
        return t

    def _lam_scale(self, theta, pattern):
        if not pattern.basis_vectors_are_standard:
            raise DomainError("the mixed model only has standard critical directions")
        if self.scale_cancel:
            return np.ones(theta.d1)
        return np.array([1.0 if pattern.k[j] == 2 else theta.lam[j] for j in range(theta.d1)])

    def group_scores(self, theta: ParameterPoint, pattern: CriticalPattern, data: LmmData) -> np.ndarray:
        t = self._terms(theta, data)
        cols = [t.xi * self._lam_scale(theta, pattern), t.s_psi]
        if theta.sigma is not None:
            cols.append(t.s_sigma[:, None])
        return np.hstack(cols)

    def modified_info(self, theta: ParameterPoint, pattern: CriticalPattern, data: LmmData) -> np.ndarray:
        t = self._terms(theta, data)
        full = _info_from_terms(t, theta.sigma is not None).full()
        scale = np.ones(full.shape[0])
        scale[:theta.d1] = self._lam_scale(theta, pattern)
        return full * np.outer(scale, scale)

    def fisher_info(self, theta: ParameterPoint, data: LmmData) -> np.ndarray:
        return lmm_fisher_info(theta, data, self.sigma_known)

    def loglik(self, theta: ParameterPoint, data: LmmData) -> float:
        return float(self._terms(theta, data).loglik.sum())
