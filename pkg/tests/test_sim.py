import json

import numpy as np
import pytest

from critscore.chisq import chisq_quantile
from critscore.exceptions import DomainError
from critscore.models.lmm import lmm_ols
from critscore.sim import (RAW_HEADER, SUMMARY_HEADER, SimConfig, aggregate, gen_sim_data, qq_table, run,
                           run_coverage, run_power, run_qq, simulate_raw)


def test_config_round_trip(tmp_path):
    cfg = SimConfig(n=5, r=3, reps=7, lambdas=((0.1, 0.2), 0.3), statistics=("score",))
    assert cfg.lambdas == ((0.1, 0.2), (0.3, 0.3))
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    assert SimConfig.from_json(p) == cfg


@pytest.mark.parametrize("bad", [{"reps": 0}, {"level": 1.0}, {"lambdas": [[-0.1, 0.1]]}, {"model": "glmm"},
                                 {"statistics": ["bogus"]}, {"mode": "other"}])
def test_config_validation(bad):
    with pytest.raises(DomainError):
        SimConfig.from_dict(bad)


def test_unknown_keys_rejected():
    with pytest.raises(DomainError):
        SimConfig.from_dict({"repz": 10})


def test_generated_data_shape_and_determinism():
    cfg = SimConfig(n=20, r=10)
    a = gen_sim_data(cfg, 4, (0.2, 0.3))
    b = gen_sim_data(cfg, 4, (0.2, 0.3))
    assert a.n == 20 and a.y.size == 200
    assert np.array_equal(a.y, b.y)
    x = a.X[:, 1]
    assert x.min() >= -1 and x.max() <= 2
    # same covariates across the grid, only the scale changes
    c = gen_sim_data(cfg, 4, (0.0, 0.0))
    assert np.array_equal(c.X, a.X)


def test_residual_variance_at_zero():
    cfg = SimConfig(n=500, r=10, sigma=1.5)
    d = gen_sim_data(cfg, 0, (0.0, 0.0))
    e = d.y - d.X @ lmm_ols(d)
    assert e.var() == pytest.approx(2.25, rel=4 * np.sqrt(2 / e.size))


def test_marginal_variance():
    cfg = SimConfig(n=4000, r=10)
    lam = (0.5, 0.8)
    d = gen_sim_data(cfg, 1, lam)
    x = d.X[:, 1]
    e = d.y - d.X @ np.array(cfg.psi)
    for lo, hi in [(-1, -0.5), (0.5, 1.0), (1.5, 2.0)]:
        sel = (x >= lo) & (x < hi)
        xm = x[sel]
        expected = np.mean(lam[0] ** 2 + lam[1] ** 2 * xm**2 + 1.0)
        # groups share effects, so inflate the error allowance
        assert e[sel].var() == pytest.approx(expected, rel=0.1)


def test_one_rep_coverage():
    cfg = SimConfig(reps=1, lambdas=((0.2, 0.2),), statistics=("score",))
    res = run_coverage(cfg)
    assert res.rows[0].coverage in (0.0, 1.0)


def test_schedule_independence():
    cfg = SimConfig(reps=30, lambdas=((0.0, 0.1), (0.3, 0.3)), statistics=("score", "wald", "lrt"))
    a = simulate_raw(cfg, threads=1, chunk=7)
    b = simulate_raw(cfg, threads=2, chunk=4)
    assert len(a) == len(b)
    for ra, rb in zip(a, b):
        assert ra[:3] == rb[:3] and ra[4:] == rb[4:]
        assert (np.isnan(ra[3]) and np.isnan(rb[3])) or ra[3] == rb[3]


def test_mc_se_recomputable_from_raw(tmp_path):
    cfg = SimConfig(reps=40, lambdas=((0.1, 0.1), (0.4, 0.4)), statistics=("score",),
                    output=str(tmp_path / "s.csv"), raw_output=str(tmp_path / "r.csv"))
    res, _ = run(cfg)
    raw = np.genfromtxt(tmp_path / "r.csv", delimiter=",", names=True, dtype=None, encoding="utf-8")
    assert tuple(raw.dtype.names) == RAW_HEADER
    summary = np.genfromtxt(tmp_path / "s.csv", delimiter=",", names=True, dtype=None, encoding="utf-8")
    assert tuple(summary.dtype.names) == SUMMARY_HEADER
    for row in summary:
        sel = (raw["lambda1"] == row["lambda1"]) & (raw["statistic"] == row["statistic"]) & (raw["converged"] == 1)
        p = raw["indicator"][sel].mean()
        assert p == pytest.approx(row["coverage"], abs=1e-15)
        assert np.sqrt(p * (1 - p) / sel.sum()) == pytest.approx(row["mc_se"], rel=1e-12)


def test_qq_identity_for_chisq_draws():
    draws = np.random.default_rng(1).chisquare(2, size=200_000)
    table = qq_table(draws, 2, 50)
    for p, th, sm in table:
        assert th == pytest.approx(chisq_quantile(2, p))
        assert abs(sm - th) < 0.05 * max(th, 1.0)


def test_aggregate_excludes_failures():
    cfg = SimConfig(reps=3, lambdas=((0.1, 0.1),), statistics=("lrt",))
    raw = [(0, 0, "lrt", 1.0, 2, True), (1, 0, "lrt", 9.0, 2, True), (2, 0, "lrt", 0.5, 2, False)]
    row = aggregate(cfg, raw)[0]
    assert row.reps == 2 and row.excluded == 1 and row.coverage == 0.5


def test_power_at_null_and_far():
    cfg = SimConfig(n=80, reps=200, lambdas=((1e-6, 1e-6), (0.5, 0.5)), statistics=("score",))
    res = run_power(cfg)
    null = res.get((1e-6, 1e-6), "score")
    far = res.get((0.5, 0.5), "score")
    assert abs(null.rejection - 0.05) <= 3 * np.sqrt(0.05 * 0.95 / 200)
    assert far.rejection > 0.95
    assert any("power monotone" in n for n in res.notes)


@pytest.mark.slow
def test_score_quantile_near_chisq():
    cfg = SimConfig(n=80, reps=2000, lambdas=((0.2, 0.2),), statistics=("score",))
    rows, res = run_qq(cfg)
    assert abs(res.rows[0].quantiles[2] - chisq_quantile(2, 0.95)) <= 0.3


def test_lrt_qq_near_boundary_reported():
    cfg = SimConfig(reps=60, lambdas=((0.01, 0.01),), statistics=("lrt",))
    rows, res = run_qq(cfg)
    assert rows and all(r[2] == "lrt" for r in rows)
