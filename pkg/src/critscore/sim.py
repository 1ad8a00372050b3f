"""Seeded Monte Carlo experiments for the random intercept and slope model.

Data for replication ``rep`` are

    Y_ij = psi_1 + psi_2 X_ij + lam_1 W_1i + lam_2 W_2i X_ij + sigma E_ij,

with ``X_ij ~ U[-1, 2]`` and standard normal ``W`` and ``E``. The draws come
from a generator keyed by ``(seed, rep)`` only, so the same underlying
variates are reused across the true-``lam`` grid and results do not depend on
how replications are scheduled across worker processes.
"""

from __future__ import annotations

import json
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ._accel import thread_count
from .chisq import chisq_quantile
from .dataio import write_csv
from .exceptions import CritScoreError, DomainError, SingularInformation
from .models.lmm import (LmmData, lmm_lrt, lmm_mle, lmm_modified_statistic_lambda, lmm_ols,
                         lmm_sigma_profile, lmm_wald)
from .streams import rep_generator

DEFAULT_GRID = (1e-6, 0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5)
STATISTICS = ("score", "wald", "lrt")
MODES = ("coverage", "power", "qq")
QUANTILE_PROBS = (0.5, 0.8, 0.95)

SUMMARY_HEADER = ("lambda1", "lambda2", "statistic", "coverage", "mc_se", "reps", "excluded",
                  "rejection", "mean", "q50", "q80", "q95")
RAW_HEADER = ("rep", "lambda1", "lambda2", "statistic", "value", "df", "converged", "indicator")
QQ_HEADER = ("lambda1", "lambda2", "statistic", "prob", "theoretical", "sample")


@dataclass(frozen=True)
class SimConfig:
    model: str = "lmm"
    mode: str = "coverage"
    n: int = 20
    r: int = 10
    lambdas: tuple = tuple((v, v) for v in DEFAULT_GRID)
    psi: tuple = (1.0, 1.0)
    sigma: float = 1.0
    sigma_known: bool = True
    psi_known: bool = False
    reps: int = 2000
    level: float = 0.95
    seed: int = 20240917
    statistics: tuple = STATISTICS
    null_lambda: tuple = (1e-6, 1e-6)
    output: str | None = None
    raw_output: str | None = None

    def __post_init__(self):
        if self.model != "lmm":
            raise DomainError(f"unknown model {self.model!r}; only 'lmm' simulations are provided")
        if self.mode not in MODES:
            raise DomainError(f"mode must be one of {MODES}")
        if int(self.reps) < 1:
            raise DomainError("replication count must be at least 1")
        if not 0 < float(self.level) < 1:
            raise DomainError("level must be in (0, 1)")
        if int(self.n) < 1 or int(self.r) < 1:
            raise DomainError("n and r must be positive")
        if not float(self.sigma) > 0:
            raise DomainError("sigma must be positive")
        lams = tuple(tuple(float(v) for v in (lv if np.ndim(lv) else (lv, lv))) for lv in self.lambdas)
        if not lams or any(len(lv) != 2 or min(lv) < 0 for lv in lams):
            raise DomainError("lambdas must be a nonempty list of nonnegative pairs")
        null = tuple(float(v) for v in self.null_lambda)
        if len(null) != 2 or min(null) < 0:
            raise DomainError("null_lambda must be a nonnegative pair")
        stats = tuple(self.statistics)
        if not stats or any(s not in STATISTICS for s in stats):
            raise DomainError(f"statistics must be a nonempty subset of {STATISTICS}")
        psi = tuple(float(v) for v in self.psi)
        if len(psi) != 2:
            raise DomainError("psi must have two entries")
        for name, val in (("lambdas", lams), ("null_lambda", null), ("statistics", stats), ("psi", psi),
                          ("reps", int(self.reps)), ("n", int(self.n)), ("r", int(self.r)),
                          ("seed", int(self.seed)), ("level", float(self.level)), ("sigma", float(self.sigma))):
            object.__setattr__(self, name, val)

    @classmethod
    def from_dict(cls, obj: dict) -> "SimConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise DomainError(f"unknown config keys: {sorted(extra)}")
        obj = dict(obj)
        if "lambdas" in obj:
            obj["lambdas"] = tuple(tuple(v) if np.ndim(v) else v for v in obj["lambdas"])
        for key in ("psi", "statistics", "null_lambda"):
            if key in obj:
                obj[key] = tuple(obj[key])
        return cls(**obj)

    @classmethod
    def from_json(cls, path) -> "SimConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambdas"] = [list(v) for v in self.lambdas]
        for key in ("psi", "statistics", "null_lambda"):
            d[key] = list(d[key])
        return d


def _draws(cfg: SimConfig, rep: int):
    rng = rep_generator(cfg.seed, rep)
    x = rng.uniform(-1.0, 2.0, size=(cfg.n, cfg.r))
    w = rng.standard_normal((cfg.n, 2))
    e = rng.standard_normal((cfg.n, cfg.r))
    return x, w, e


def _assemble(cfg: SimConfig, lam, draws) -> LmmData:
    x, w, e = draws
    psi = cfg.psi
    y = psi[0] + psi[1] * x + lam[0] * w[:, [0]] + lam[1] * w[:, [1]] * x + cfg.sigma * e
    xf = x.ravel()
    design = np.column_stack([np.ones(xf.size), xf])
    offsets = np.arange(cfg.n + 1) * cfg.r
    return LmmData(y.ravel(), design, design, offsets, (0, 1), (), ("1", "x"), ("1", "x"))


def gen_sim_data(cfg: SimConfig, rep_index: int, lam=None) -> LmmData:
    """Dataset for replication ``rep_index`` at true ``lam`` (first grid point by default)."""
    lam = cfg.lambdas[0] if lam is None else tuple(float(v) for v in lam)
    return _assemble(cfg, lam, _draws(cfg, rep_index))


def _score_value(cfg, data, at):
    psi = np.asarray(cfg.psi) if cfg.psi_known else lmm_ols(data)
    if cfg.sigma_known:
        res = lmm_modified_statistic_lambda(at, psi, data, cfg.sigma)
    else:
        sig = lmm_sigma_profile(at, data, psi=psi)[0]
        res = lmm_modified_statistic_lambda(at, psi, data, sig, sigma_nuisance=True)
    return res.statistic, res.df


def _rep_rows(cfg: SimConfig, rep: int) -> list[tuple]:
    """Raw rows ``(rep, grid index, statistic, value, df, converged)`` for one replication."""
    draws = _draws(cfg, rep)
    rows = []
    for g, lam in enumerate(cfg.lambdas):
        data = _assemble(cfg, lam, draws)
        at = cfg.null_lambda if cfg.mode == "power" else lam
        if "score" in cfg.statistics:
            try:
                val, df = _score_value(cfg, data, at)
                rows.append((rep, g, "score", val, df, True))
            except SingularInformation:
                rows.append((rep, g, "score", float("nan"), 2, False))
        if "wald" in cfg.statistics or "lrt" in cfg.statistics:
            try:
                fit = lmm_mle(data, cfg.sigma if cfg.sigma_known else None)
                ok = fit.converged
            except CritScoreError:
                fit, ok = None, False
            if "wald" in cfg.statistics:
                if fit is None:
                    rows.append((rep, g, "wald", float("nan"), 0, False))
                else:
                    wr = lmm_wald(at, data, fit)
                    rows.append((rep, g, "wald", wr.statistic, wr.df, ok))
            if "lrt" in cfg.statistics:
                val = float("nan") if fit is None else lmm_lrt(at, data, fit)
                rows.append((rep, g, "lrt", val, 2, ok))
    return rows


def _chunk_rows(args):
    cfg, reps = args
    out = []
    for rep in reps:
        out.extend(_rep_rows(cfg, rep))
    return out


def simulate_raw(cfg: SimConfig, threads: int | None = None, chunk: int = 25) -> list[tuple]:
    """All raw rows in replication order, independent of ``threads``."""
    workers = thread_count(threads)
    reps = list(range(cfg.reps))
    chunks = [reps[i:i + chunk] for i in range(0, len(reps), chunk)]
    if workers == 1 or len(chunks) == 1:
        parts = [_chunk_rows((cfg, c)) for c in chunks]
    else:
        method = "fork" if "fork" in multiprocessing.get_all_start_methods() else None
        ctx = multiprocessing.get_context(method)
        with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            parts = list(pool.map(_chunk_rows, [(cfg, c) for c in chunks]))
    return [row for part in parts for row in part]


@dataclass(frozen=True)
class SummaryRow:
    lam: tuple[float, float]
    statistic: str
    coverage: float
    mc_se: float
    reps: int
    excluded: int
    mean: float
    quantiles: tuple[float, ...]

    @property
    def rejection(self) -> float:
        return 1.0 - self.coverage if np.isfinite(self.coverage) else float("nan")

    def as_row(self) -> tuple:
        return (self.lam[0], self.lam[1], self.statistic, self.coverage, self.mc_se, self.reps,
                self.excluded, self.rejection, self.mean, *self.quantiles)


@dataclass
class SimResult:
    config: SimConfig
    rows: list[SummaryRow]
    raw: list[tuple] = field(repr=False, default_factory=list)
    notes: list[str] = field(default_factory=list)

    def get(self, lam, statistic: str) -> SummaryRow:
        lam = tuple(float(v) for v in lam)
        for row in self.rows:
            if row.lam == lam and row.statistic == statistic:
                return row
        raise KeyError((lam, statistic))

    def raw_rows(self) -> list[tuple]:
        """Raw rows with the grid index resolved and the indicator attached."""
        out = []
        for rep, g, stat, val, df, ok in self.raw:
            lam = self.config.lambdas[g]
            out.append((rep, lam[0], lam[1], stat, val, df, ok, _indicator(self.config, val, df)))
        return out

    def write(self, path) -> None:
        write_csv(path, SUMMARY_HEADER, [r.as_row() for r in self.rows])

    def write_raw(self, path) -> None:
        write_csv(path, RAW_HEADER, self.raw_rows())


def _indicator(cfg: SimConfig, value: float, df: int) -> int:
    """1 if the statistic accepts the tested value at ``cfg.level``."""
    if not np.isfinite(value):
        return 0
    return int(df == 0 or value <= chisq_quantile(df, cfg.level))


def aggregate(cfg: SimConfig, raw: list[tuple]) -> list[SummaryRow]:
    """Per (grid point, statistic) summaries; rows with a failed fit or statistic are excluded."""
    out = []
    for g, lam in enumerate(cfg.lambdas):
        for stat in cfg.statistics:
            sel = [(v, df, ok) for (_, gg, s, v, df, ok) in raw if gg == g and s == stat]
            used = [(v, df) for v, df, ok in sel if ok and np.isfinite(v)]
            excluded = len(sel) - len(used)
            m = len(used)
            if m == 0:
                out.append(SummaryRow(lam, stat, float("nan"), float("nan"), 0, excluded, float("nan"),
                                      tuple(float("nan") for _ in QUANTILE_PROBS)))
                continue
            accept = np.array([_indicator(cfg, v, df) for v, df in used], dtype=float)
            p = float(accept.mean())
            vals = np.array([v for v, _ in used])
            out.append(SummaryRow(lam, stat, p, float(np.sqrt(p * (1 - p) / m)), m, excluded,
                                  float(vals.mean()), tuple(float(q) for q in np.quantile(vals, QUANTILE_PROBS))))
    return out


def _run(cfg: SimConfig, threads) -> SimResult:
    raw = simulate_raw(cfg, threads)
    res = SimResult(cfg, aggregate(cfg, raw), raw)
    for row in res.rows:
        if row.excluded:
            res.notes.append(f"{row.statistic} at lambda={row.lam}: {row.excluded} replications excluded")
    return res


def _flag_off_nominal(res: SimResult, target: float, label: str):
    for row in res.rows:
        if row.reps and abs(row.coverage - target) > 2 * max(row.mc_se, 1e-12):
            res.notes.append(f"{row.statistic} {label} at lambda={row.lam} is {row.coverage:.4f}, "
                             f"more than 2 MC s.e. from {target:.4f}")


def run_coverage(cfg: SimConfig, threads: int | None = None) -> SimResult:
    """Coverage of the true ``lam`` by each statistic at the configured level."""
    if cfg.mode != "coverage":
        cfg = SimConfig.from_dict({**cfg.to_dict(), "mode": "coverage"})
    res = _run(cfg, threads)
    _flag_off_nominal(res, cfg.level, "coverage")
    return res


def run_power(cfg: SimConfig, null_lambda=None, threads: int | None = None) -> SimResult:
    """Rejection rates of ``null_lambda`` as the true ``lam`` moves over the grid.

    Read the ``rejection`` column; ``coverage`` is its complement. A note is added for each statistic whose rejection rate drops by more than
    2 MC s.e. between consecutive grid points ordered by distance from the null.
    """
    upd = {**cfg.to_dict(), "mode": "power"}
    if null_lambda is not None:
        upd["null_lambda"] = list(null_lambda)
    cfg = SimConfig.from_dict(upd)
    res = _run(cfg, threads)
    null = np.asarray(cfg.null_lambda)
    order = sorted(range(len(cfg.lambdas)), key=lambda g: float(np.linalg.norm(np.asarray(cfg.lambdas[g]) - null)))
    for stat in cfg.statistics:
        rows = [res.get(cfg.lambdas[g], stat) for g in order]
        rows = [r for r in rows if r.reps]
        drops = [(a, b) for a, b in zip(rows, rows[1:])
                 if b.rejection < a.rejection - 2 * np.hypot(a.mc_se, b.mc_se)]
        res.notes.append(f"{stat} power monotone: {'yes' if not drops else 'no'}")
    for row in res.rows:
        if np.allclose(row.lam, null) and row.reps:
            target = 1 - cfg.level
            if abs(row.rejection - target) > 2 * max(row.mc_se, 1e-12):
                res.notes.append(f"{row.statistic} size at the null is {row.rejection:.4f}, "
                                 f"more than 2 MC s.e. from {target:.4f}")
    return res


def qq_table(values, df: int = 2, max_points: int = 100) -> list[tuple[float, float, float]]:
    """``(prob, theoretical chi2 quantile, sample quantile)`` at plotting positions."""
    vals = np.sort(np.asarray([v for v in values if np.isfinite(v)], dtype=float))
    if vals.size == 0:
        return []
    m = min(vals.size, max_points)
    probs = (np.arange(1, m + 1) - 0.5) / m
    sample = np.quantile(vals, probs)
    return [(float(p), chisq_quantile(df, float(p)), float(s)) for p, s in zip(probs, sample)]


def run_qq(cfg: SimConfig, threads: int | None = None, max_points: int = 100):
    """Plot-ready QQ rows ``(lambda1, lambda2, statistic, prob, theoretical, sample)`` and the result."""
    cfg = SimConfig.from_dict({**cfg.to_dict(), "mode": "qq"})
    res = _run(cfg, threads)
    rows = []
    for g, lam in enumerate(cfg.lambdas):
        for stat in cfg.statistics:
            vals = [v for (_, gg, s, v, _, ok) in res.raw if gg == g and s == stat and ok]
            for p, th, sm in qq_table(vals, 2, max_points):
                rows.append((lam[0], lam[1], stat, p, th, sm))
    return rows, res


def run(cfg: SimConfig, threads: int | None = None):
    """Dispatch on ``cfg.mode``; writes ``cfg.output`` / ``cfg.raw_output`` when set."""
    if cfg.mode == "power":
        res = run_power(cfg, threads=threads)
        table = None
    elif cfg.mode == "qq":
        table, res = run_qq(cfg, threads)
    else:
        res = run_coverage(cfg, threads)
        table = None
    if cfg.output:
        os.makedirs(os.path.dirname(os.path.abspath(cfg.output)), exist_ok=True)
        if table is not None:
            write_csv(cfg.output, QQ_HEADER, table)
        else:
            res.write(cfg.output)
    if cfg.raw_output:
        res.write_raw(cfg.raw_output)
    return res, table
