"""Modified score statistic, efficient information, and critical directions.

A model plugs in through the :class:`ScoreModel` protocol: it returns the
per-group modified score contributions (first derivatives, with second
derivatives along critical scale directions) and the covariance of their sum.
Everything here is model agnostic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .chisq import chisq_sf
from .exceptions import DomainError, NonOrthogonalNuisanceWarning, SingularInformation

PIVOT_TOL = 1e-12


@dataclass(frozen=True)
class ParameterPoint:
    """Partitioned parameter ``(lam, psi[, sigma])``.

    ``lam`` holds scale parameters (each >= 0), ``psi`` the free parameters and
    ``sigma`` an optional error scale. The flat order is lam, psi, sigma.
    """

    lam: np.ndarray
    psi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sigma: float | None = None

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lam, dtype=float)).copy()
        psi = np.atleast_1d(np.asarray(self.psi, dtype=float)).copy()
        if lam.ndim != 1 or psi.ndim != 1:
            raise DomainError("lam and psi must be one-dimensional")
        if np.any(~np.isfinite(lam)) or np.any(lam < 0):
            raise DomainError(f"scale parameters must be finite and >= 0, got {lam}")
        if np.any(~np.isfinite(psi)):
            raise DomainError("free parameters must be finite")
        sigma = self.sigma
        if sigma is not None:
            sigma = float(sigma)
            if not sigma > 0 or not np.isfinite(sigma):
                raise DomainError(f"sigma must be positive, got {sigma}")
        lam.flags.writeable = False
        psi.flags.writeable = False
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "sigma", sigma)

    @property
    def d1(self) -> int:
        return self.lam.size

    @property
    def d2(self) -> int:
        return self.psi.size

    @property
    def dim(self) -> int:
        return self.d1 + self.d2 + (self.sigma is not None)

    @property
    def index_map(self) -> list[tuple[str, int]]:
        out = [("lam", j) for j in range(self.d1)]
        out += [("psi", j) for j in range(self.d2)]
        if self.sigma is not None:
            out.append(("sigma", 0))
        return out

    def flat_index(self, block: str, j: int = 0) -> int:
        if block == "lam":
            if not 0 <= j < self.d1:
                raise IndexError(j)
            return j
        if block == "psi":
            if not 0 <= j < self.d2:
                raise IndexError(j)
            return self.d1 + j
        if block == "sigma" and self.sigma is not None and j == 0:
            return self.d1 + self.d2
        raise IndexError((block, j))

    def flat(self) -> np.ndarray:
        parts = [self.lam, self.psi]
        if self.sigma is not None:
            parts.append([self.sigma])
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, vec, d1: int, d2: int, has_sigma: bool) -> "ParameterPoint":
        vec = np.asarray(vec, dtype=float)
        if vec.size != d1 + d2 + has_sigma:
            raise DomainError("flat vector has the wrong length")
        sigma = float(vec[d1 + d2]) if has_sigma else None
        return cls(vec[:d1], vec[d1:d1 + d2], sigma)

    def with_flat(self, indices: Sequence[int], values) -> "ParameterPoint":
        vec = self.flat()
        vec[list(indices)] = values
        return ParameterPoint.from_flat(vec, self.d1, self.d2, self.sigma is not None)

    def is_scale_index(self, j: int) -> bool:
        return 0 <= j < self.d1


@dataclass(frozen=True)
class CriticalPattern:
    """Derivative order per flat index; 2 marks a critical scale direction."""

    k: tuple[int, ...]
    basis_vectors_are_standard: bool = True
    basis: np.ndarray | None = None

    def __post_init__(self):
        if any(kj not in (1, 2) for kj in self.k):
            raise DomainError("only derivative orders 1 and 2 are supported")
        if not self.basis_vectors_are_standard:
            if self.basis is None:
                raise DomainError("non-standard pattern needs an eigenvector basis")
            basis = np.asarray(self.basis, dtype=float)
            gram = basis.T @ basis
            if not np.allclose(gram, np.eye(gram.shape[0]), rtol=0, atol=1e-10):
                raise DomainError("critical basis is not orthonormal")

    @property
    def critical_indices(self) -> frozenset[int]:
        return frozenset(j for j, kj in enumerate(self.k) if kj == 2)

    @property
    def is_regular(self) -> bool:
        return all(kj == 1 for kj in self.k)


@dataclass(frozen=True)
class ModifiedScore:
    value: np.ndarray
    info: np.ndarray
    n_groups: int


@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: int
    p_value: float
    pattern: CriticalPattern
    condition_number: float
    notes: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "df": self.df,
            "p_value": self.p_value,
            "pattern": list(self.pattern.k),
            "critical_indices": sorted(self.pattern.critical_indices),
            "condition_number": self.condition_number,
            "notes": list(self.notes),
        }


class ScoreModel(Protocol):
    """What a model must provide for the generic machinery.

    ``group_scores`` returns an ``(n_groups, d)`` array whose row ``i`` is group
    ``i``'s modified score: entry ``j`` is the ``k_j``-th derivative of that
    group's log-likelihood in ``theta_j``. A model may rescale a column by a
    nonzero constant (the statistic is invariant to this) as long as
    ``modified_info`` is the covariance of the rescaled sum.
    """

    def group_scores(self, theta: ParameterPoint, pattern: CriticalPattern, data) -> np.ndarray: ...

    def modified_info(self, theta: ParameterPoint, pattern: CriticalPattern, data) -> np.ndarray: ...

    def loglik(self, theta: ParameterPoint, data) -> float: ...


def critical_pattern(theta: ParameterPoint, zero_tol: float = 0.0) -> CriticalPattern:
    """Order-2 derivatives exactly for scale parameters at (or below ``zero_tol``) zero."""
    if zero_tol < 0:
        raise DomainError("zero_tol must be nonnegative")
    k = [2 if lj <= zero_tol else 1 for lj in theta.lam]
    k += [1] * (theta.dim - theta.d1)
    return CriticalPattern(tuple(k))


def modified_score(model: ScoreModel, theta: ParameterPoint, data,
                   pattern: CriticalPattern | None = None) -> ModifiedScore:
    if pattern is None:
        pattern = critical_pattern(theta)
    # order-2 entries are derivatives on the critical line itself
    snap = [j for j in pattern.critical_indices if theta.is_scale_index(j) and theta.lam[j] != 0.0]
    if snap:
        theta = theta.with_flat(snap, np.zeros(len(snap)))
    contrib = np.asarray(model.group_scores(theta, pattern, data), dtype=float)
    if contrib.ndim != 2 or contrib.shape[0] == 0:
        raise DomainError("data must contain at least one group")
    info = np.asarray(model.modified_info(theta, pattern, data), dtype=float)
    return ModifiedScore(contrib.sum(axis=0), 0.5 * (info + info.T), contrib.shape[0])


def _equilibrated_cholesky(mat: np.ndarray, what: str = "information"):
    """Cholesky factor of the unit-diagonal rescaling of ``mat``.

    Returns ``(L, scale, cond)`` with ``mat = diag(scale) L L' diag(scale)``.
    Pivots below ``PIVOT_TOL`` relative to the unit diagonal raise.
    """
    diag = np.diag(mat).copy()
    bad = np.flatnonzero(~(diag > 0))
    if bad.size:
        raise SingularInformation(
            f"{what} has a nonpositive diagonal entry at index {bad[0]}; "
            "this looks like an undetected critical direction",
            pivot=float(diag[bad[0]]), index=int(bad[0]))
    scale = np.sqrt(diag)
    corr = mat / np.outer(scale, scale)
    d = corr.shape[0]
    L = np.zeros_like(corr)
    for j in range(d):
        pivot = corr[j, j] - L[j, :j] @ L[j, :j]
        if not pivot > PIVOT_TOL:
            raise SingularInformation(
                f"{what} is not positive definite (relative pivot {pivot:.3g} at index {j}); "
                "inference is being attempted at a previously unknown critical point",
                pivot=float(pivot), index=j)
        L[j, j] = np.sqrt(pivot)
        L[j + 1:, j] = (corr[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    ev = np.linalg.eigvalsh(corr)
    cond = float(ev[-1] / ev[0]) if ev[0] > 0 else float("inf")
    return L, scale, cond


def quadratic_form_inverse(mat: np.ndarray, vec: np.ndarray, what: str = "information"):
    """``vec' mat^{-1} vec`` with the positive-definiteness check; returns ``(value, cond)``."""
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    vec = np.atleast_1d(np.asarray(vec, dtype=float))
    L, scale, cond = _equilibrated_cholesky(mat, what)
    z = np.linalg.solve(L, vec / scale) if L.shape[0] > 1 else (vec / scale) / L[0, 0]
    return float(z @ z), cond


def _result(stat, df, pattern, cond, notes=()):
    stat = max(float(stat), 0.0)
    return TestResult(stat, int(df), chisq_sf(int(df), stat), pattern, cond, tuple(notes))


def modified_statistic(model: ScoreModel, theta: ParameterPoint, data,
                       pattern: CriticalPattern | None = None, zero_tol: float = 0.0) -> TestResult:
    """Continuous extension of the expected-information score statistic.

    Equals ``s' I^{-1} s`` at regular points; at critical points the score entries
    along critical scale directions are replaced by second derivatives.
    """
    if pattern is None:
        pattern = critical_pattern(theta, zero_tol)
    ms = modified_score(model, theta, data, pattern)
    stat, cond = quadratic_form_inverse(ms.info, ms.value, "modified information")
    return _result(stat, ms.value.size, pattern, cond)


def schur_complement(mat, keep: Sequence[int]) -> np.ndarray:
    """Efficient information of the ``keep`` block: ``M_kk - M_kr M_rr^{-1} M_rk``."""
    mat = np.asarray(mat, dtype=float)
    d = mat.shape[0]
    keep = list(keep)
    if len(set(keep)) != len(keep) or any(not 0 <= j < d for j in keep):
        raise DomainError(f"invalid keep indices {keep}")
    rest = [j for j in range(d) if j not in keep]
    mkk = mat[np.ix_(keep, keep)]
    if not rest:
        return mkk.copy()
    mrr = mat[np.ix_(rest, rest)]
    mkr = mat[np.ix_(keep, rest)]
    L, scale, _ = _equilibrated_cholesky(mrr, "nuisance block")
    # mrr^{-1} = diag(1/scale) (L L')^{-1} diag(1/scale)
    w = np.linalg.solve(L, (mkr / scale).T)
    out = mkk - w.T @ w
    return 0.5 * (out + out.T)


def subvector_statistic(model: ScoreModel, theta: ParameterPoint, data, interest: Sequence[int],
                        pattern: CriticalPattern | None = None, zero_tol: float = 0.0,
                        orthogonality_tol: float = 0.25, efficient_score: bool = False) -> TestResult:
    """Statistic for ``theta[interest]`` with the remaining entries plugged in.

    The modified score for the interest block is standardized by the Schur
    complement of the modified information. Outside block-orthogonal cases this
    is a heuristic; a :class:`NonOrthogonalNuisanceWarning` is emitted when the
    cross block is large relative to the interest block. With
    ``efficient_score`` the interest score is first residualized on the
    nuisance score, ``s_I - M_IR M_RR^{-1} s_R``, which removes the first-order
    effect of holding correlated nuisance entries fixed.
    """
    interest = sorted(set(int(j) for j in interest))
    if not interest:
        raise DomainError("interest set is empty")
    if pattern is None:
        pattern = critical_pattern(theta, zero_tol)
    ms = modified_score(model, theta, data, pattern)
    if len(interest) == theta.dim:
        stat, cond = quadratic_form_inverse(ms.info, ms.value, "modified information")
        return _result(stat, theta.dim, pattern, cond)

    notes = []
    rest = [j for j in range(theta.dim) if j not in interest]
    diag = np.sqrt(np.clip(np.diag(ms.info), 1e-300, None))
    corr = ms.info / np.outer(diag, diag)
    cross = np.linalg.svd(corr[np.ix_(interest, rest)], compute_uv=False)
    inner = np.linalg.eigvalsh(corr[np.ix_(interest, interest)])
    if cross.size and cross[0] > orthogonality_tol * inner[0]:
        msg = (f"nuisance block not orthogonal to interest block "
               f"(cross {cross[0]:.3g} vs interest eigenvalue {inner[0]:.3g}); plug-in statistic is heuristic")
        warnings.warn(msg, NonOrthogonalNuisanceWarning, stacklevel=2)
        notes.append("non-orthogonal nuisance")
    eff = schur_complement(ms.info, interest)
    score = ms.value[interest]
    if efficient_score:
        L, scale, _ = _equilibrated_cholesky(ms.info[np.ix_(rest, rest)], "nuisance block")
        u = np.linalg.solve(L.T, np.linalg.solve(L, ms.value[rest] / scale)) / scale
        score = score - ms.info[np.ix_(interest, rest)] @ u
    stat, cond = quadratic_form_inverse(eff, score, "efficient information")
    return _result(stat, len(interest), pattern, cond, notes)


def detect_critical_numeric(info, rel_threshold: float = 1e-8) -> list[tuple[float, np.ndarray]]:
    """Eigenpairs of ``info`` whose eigenvalue is at most ``rel_threshold`` times the largest."""
    info = np.asarray(info, dtype=float)
    info = 0.5 * (info + info.T)
    vals, vecs = np.linalg.eigh(info)
    top = max(vals[-1], 0.0)
    cut = rel_threshold * top
    return [(float(vals[j]), vecs[:, j].copy()) for j in range(vals.size) if vals[j] <= cut]


def pattern_from_detection(theta: ParameterPoint, info, rel_threshold: float = 1e-8) -> CriticalPattern:
    """Build a pattern from numerically detected null directions.

    Directions that align with a scale-parameter coordinate (``|dot| > 1 - 1e-6``)
    become standard order-2 entries; anything else is returned as a non-standard
    basis which the shipped models reject.
    """
    pairs = detect_critical_numeric(info, rel_threshold)
    k = [1] * theta.dim
    odd = []
    for _, vec in pairs:
        j = int(np.argmax(np.abs(vec)))
        if abs(vec[j]) > 1 - 1e-6 and theta.is_scale_index(j):
            k[j] = 2
        else:
            odd.append(vec)
    if odd:
        vals, vecs = np.linalg.eigh(0.5 * (info + np.transpose(info)))
        return CriticalPattern(tuple(k), basis_vectors_are_standard=False, basis=vecs)
    return CriticalPattern(tuple(k))
