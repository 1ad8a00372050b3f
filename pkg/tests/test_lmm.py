import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from critscore.core import ParameterPoint, modified_statistic
from critscore.exceptions import DomainError, RankDeficientDesign
from critscore.models.lmm import (LmmData, LmmModel, build_sigma, lmm_fisher_info, lmm_gls, lmm_lrt, lmm_loglik,
                                  lmm_mle, lmm_modified_info, lmm_modified_statistic_lambda, lmm_ols,
                                  lmm_profile, lmm_profile_at, lmm_score, lmm_sigma_profile, lmm_wald, lmm_xi)
from critscore.models.toy import toy_loglik, toy_simulate
from critscore.sim import SimConfig, gen_sim_data

from conftest import dense_loglik, random_lmm


def fd_grad(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h * max(1.0, abs(x[k]))
        out[k] = (f(x + e) - f(x - e)) / (2 * e[k])
    return out


def toy_as_lmm(td):
    n, r = td.y.shape
    return LmmData(td.y.ravel(), np.zeros((n * r, 0)), np.ones((n * r, 1)), np.arange(n + 1) * r, [0])


def test_build_sigma_examples():
    Z = np.column_stack([np.ones(3), [0.0, 1.0, 2.0]])
    S, H = build_sigma([0.0, 0.0], 1.5, Z, [0, 1])
    assert np.array_equal(S, 2.25 * np.eye(3))
    S, H = build_sigma([0.5, 0.0], 1.0, Z, [0, 1])
    assert np.allclose(S, np.eye(3) + 0.25 * np.ones((3, 3)))
    # tied columns share one scale
    S, H = build_sigma([0.7], 1.0, Z, [0, 0])
    assert np.allclose(S, np.eye(3) + 0.49 * Z @ Z.T)


def test_sigma_is_covariance_of_draws():
    rng = np.random.default_rng(0)
    Z = np.column_stack([np.ones(4), np.arange(4.0)])
    lam = np.array([0.6, 0.3])
    n = 200_000
    y = (rng.normal(size=(n, 2)) * lam) @ Z.T + 0.8 * rng.normal(size=(n, 4))
    S, _ = build_sigma(lam, 0.8, Z, [0, 1])
    assert np.allclose(np.cov(y.T), S, atol=0.04)


def test_loglik_standard_normal(rng):
    data = random_lmm(rng)
    ref = -0.5 * data.y.size * np.log(2 * np.pi) - 0.5 * data.y @ data.y
    assert lmm_loglik(ParameterPoint([0.0, 0.0], [0.0, 0.0]), data, 1.0) == pytest.approx(ref, rel=1e-13)


@pytest.mark.parametrize("lam", [(0.0, 0.0), (0.4, 0.0), (0.7, 1.3)])
def test_loglik_dense(lam, rng):
    data = random_lmm(rng, n=8, r_range=(1, 7))
    psi = np.array([0.3, -0.8])
    a = lmm_loglik(ParameterPoint(lam, psi), data, 0.9)
    assert abs(a - dense_loglik(lam, psi, 0.9, data)) <= 1e-10 * abs(a)


def test_loglik_matches_toy():
    td = toy_simulate(0.7, 30, 3, seed=5)
    data = toy_as_lmm(td)
    for th in [0.0, 0.4, 1.2]:
        assert lmm_loglik(ParameterPoint([th]), data, 1.0) == pytest.approx(toy_loglik(th, td), rel=1e-12)


def test_group_permutation_invariance(rng):
    data = random_lmm(rng, n=9)
    perm = rng.permutation(9)
    other = data.subset(perm)
    th = ParameterPoint([0.2, 0.5], [0.1, 0.4])
    assert lmm_loglik(th, other, 1.1) == pytest.approx(lmm_loglik(th, data, 1.1), rel=1e-13)
    assert np.allclose(lmm_score(th, other, 1.1), lmm_score(th, data, 1.1), rtol=1e-12)


def test_score_finite_difference(rng):
    data = random_lmm(rng, n=10)
    lam, psi, sig = np.array([0.3, 0.6]), np.array([0.2, -0.5]), 1.2

    def f(x):
        return lmm_loglik(ParameterPoint(x[:2], x[2:4], x[4]), data)

    x0 = np.concatenate([lam, psi, [sig]])
    s = lmm_score(ParameterPoint(lam, psi, sig), data)
    assert np.allclose(s, fd_grad(f, x0), rtol=1e-6, atol=1e-8)


def test_scale_score_vanishes_at_zero(rng):
    data = random_lmm(rng)
    s = lmm_score(ParameterPoint([0.0, 0.4], [0.0, 0.0]), data, 1.0)
    assert s[0] == 0.0


def test_xi_is_second_derivative_at_zero(rng):
    data = random_lmm(rng, n=10)
    psi = np.array([0.2, -0.5])

    def f(a):
        return lmm_loglik(ParameterPoint([a, 0.4], psi), data, 1.0)

    d2 = lambda h: 2 * (f(h) - f(0.0)) / h**2
    rich = (4 * d2(5e-4) - d2(1e-3)) / 3
    assert lmm_xi(ParameterPoint([0.0, 0.4], psi), data, 1.0)[0] == pytest.approx(rich, rel=1e-5)


def test_xi_zero_mean():
    rng = np.random.default_rng(21)
    Z = np.column_stack([np.ones(4), np.arange(4.0)])
    lam = np.array([0.0, 0.3])
    S, H = build_sigma(lam, 1.0, Z, [0, 1])
    Q = np.linalg.inv(S)
    n = 100_000
    e = rng.normal(size=(n, 4)) @ np.linalg.cholesky(S).T
    u = e @ Q
    b = u @ Z
    xi = b**2 - np.array([np.trace(Q @ Hj) for Hj in H])
    # analytic variance per group from the modified information of a one-group data set
    one = LmmData.from_groups([(np.zeros(4), np.ones((4, 1)), Z)], [0, 1])
    C = lmm_modified_info(ParameterPoint(lam, [0.0]), one, 1.0).lambda_block
    assert np.all(np.abs(xi.mean(axis=0)) <= 3 * np.sqrt(np.diag(C) / n))


def test_information_single_group_example():
    r = 5
    one = LmmData.from_groups([(np.zeros(r), np.ones((r, 1)), np.ones((r, 1)))], [0])
    C = lmm_modified_info(ParameterPoint([0.0], [0.0]), one, 1.0).lambda_block
    assert C[0, 0] == pytest.approx(2.0 * r**2)


def test_information_blocks(rng):
    data = random_lmm(rng)
    blocks = lmm_modified_info(ParameterPoint([0.0, 0.3], [1.0, 1.0], 1.0), data)
    full = blocks.full()
    assert np.all(blocks.cross == 0)
    assert np.allclose(full, full.T, rtol=1e-12)
    assert np.all(full[:2, 2:4] == 0) and np.all(full[4, 2:4] == 0)
    assert np.linalg.eigvalsh(full)[0] > 0


def test_information_does_not_depend_on_psi(rng):
    data = random_lmm(rng)
    a = lmm_fisher_info(ParameterPoint([0.2, 0.3], [0.0, 0.0]), data, 1.0)
    b = lmm_fisher_info(ParameterPoint([0.2, 0.3], [5.0, -2.0]), data, 1.0)
    assert np.array_equal(a, b)


def test_statistic_lambda_regular_equals_raw(rng):
    data = random_lmm(rng, n=15)
    th = ParameterPoint([0.3, 0.5], [0.1, 0.1])
    t = lmm_modified_statistic_lambda(th.lam, th.psi, data, 1.0).statistic
    s = lmm_score(th, data, 1.0)[:2]
    I = lmm_fisher_info(th, data, 1.0)[:2, :2]
    assert t == pytest.approx(s @ np.linalg.solve(I, s), rel=1e-10)


def test_statistic_lambda_continuous(rng):
    data = random_lmm(rng, n=15)
    psi = np.array([0.1, 0.1])
    t0 = lmm_modified_statistic_lambda([0.0, 0.0], psi, data, 1.0).statistic
    te = lmm_modified_statistic_lambda([1e-5, 1e-5], psi, data, 1.0).statistic
    assert abs(te - t0) / max(t0, 1.0) < 1e-4


def test_statistic_lambda_mean_at_truth():
    cfg = SimConfig(n=20, r=10, reps=1)
    lam = (0.2, 0.3)
    vals = []
    for rep in range(3000):
        data = gen_sim_data(cfg, rep, lam)
        vals.append(lmm_modified_statistic_lambda(lam, np.array(cfg.psi), data, 1.0).statistic)
    vals = np.asarray(vals)
    assert abs(vals.mean() - 2.0) <= 3 * vals.std() / np.sqrt(vals.size)


def test_ols_and_gls(rng):
    data = random_lmm(rng, n=12)
    assert np.allclose(lmm_gls([0.0, 0.0], 1.0, data), lmm_ols(data), rtol=1e-12)
    psi = lmm_gls([0.4, 0.2], 0.8, data)
    s = lmm_score(ParameterPoint([0.4, 0.2], psi), data, 0.8)
    assert np.all(np.abs(s[2:4]) < 1e-10)
    ll, psi2 = lmm_profile([0.4, 0.2], 0.8, data)
    assert np.allclose(psi2, psi) and ll == pytest.approx(lmm_loglik(ParameterPoint([0.4, 0.2], psi), data, 0.8))


def test_noiseless_recovery(rng):
    data = random_lmm(rng, n=12)
    truth = np.array([1.5, -0.25])
    exact = data.with_y(data.X @ truth)
    assert np.allclose(lmm_ols(exact), truth, atol=1e-10)
    assert np.allclose(lmm_gls([0.3, 0.1], 1.0, exact), truth, atol=1e-10)


def test_rank_deficient(rng):
    data = random_lmm(rng, n=5)
    bad = LmmData(data.y, np.column_stack([data.X[:, 0], data.X[:, 0]]), data.Z, data.offsets, data.scale_map)
    with pytest.raises(RankDeficientDesign):
        lmm_ols(bad)


def test_sigma_profile(rng):
    data = random_lmm(rng, n=12)
    sig, ll = lmm_sigma_profile([0.3, 0.2], data)
    psi = lmm_gls([0.3, 0.2], sig, data)
    for s in (0.95 * sig, 1.05 * sig):
        assert lmm_profile([0.3, 0.2], s, data)[0] <= ll + 1e-9
    assert ll == pytest.approx(lmm_loglik(ParameterPoint([0.3, 0.2], psi, sig), data), rel=1e-10)


def test_mle_matches_golden_section():
    td = toy_simulate(0.7, 40, 3, seed=5)
    fit = lmm_mle(toy_as_lmm(td), sigma_known=1.0)
    ref = minimize_scalar(lambda t: -toy_loglik(abs(t), td), bracket=(0.1, 1.0), method="golden", tol=1e-10)
    assert fit.converged
    assert fit.lam[0] == pytest.approx(abs(ref.x), abs=1e-5)


def test_mle_beats_truth():
    cfg = SimConfig(n=20, r=10, reps=1)
    for rep in range(5):
        data = gen_sim_data(cfg, rep, (0.2, 0.3))
        fit = lmm_mle(data, sigma_known=1.0)
        assert fit.converged
        assert fit.loglik >= lmm_loglik(ParameterPoint([0.2, 0.3], fit.psi), data, 1.0) - 1e-9
        free = lmm_mle(data)
        assert free.loglik >= lmm_loglik(ParameterPoint([0.2, 0.3], fit.psi, 1.0), data) - 1e-9


def test_mle_fixed_coordinates():
    data = gen_sim_data(SimConfig(n=20, r=10, reps=1), 0, (0.2, 0.3))
    fit = lmm_mle(data, sigma_known=1.0, fixed={0: 0.1})
    assert fit.lam[0] == 0.1
    assert fit.loglik <= lmm_mle(data, sigma_known=1.0).loglik + 1e-9


@pytest.mark.slow
def test_boundary_frequency():
    cfg = SimConfig(n=200, r=4, reps=1)
    on_zero = 0
    reps = 500
    for rep in range(reps):
        fit = lmm_mle(gen_sim_data(cfg, rep, (0.0, 0.5)), sigma_known=1.0)
        on_zero += fit.lam[0] == 0.0
    assert 0.3 <= on_zero / reps <= 0.7


def test_wald_and_lrt_vanish_at_estimate():
    data = gen_sim_data(SimConfig(n=20, r=10, reps=1), 3, (0.2, 0.3))
    fit = lmm_mle(data, sigma_known=1.0)
    assert lmm_wald(fit.lam, data, fit).statistic == 0.0
    assert abs(lmm_lrt(fit.lam, data, fit)) < 1e-8


def test_wald_degenerate_on_boundary():
    data = gen_sim_data(SimConfig(n=20, r=10, reps=1), 0, (0.0, 0.0))
    fit = lmm_mle(data, sigma_known=1.0)
    w = lmm_wald([0.1, 0.1], data, fit)
    kept = [j for j in range(2) if fit.lam[j] > 0]
    assert w.df == len(kept) and w.degenerate == (len(kept) < 2)


def test_lrt_against_grid():
    data = gen_sim_data(SimConfig(n=20, r=10, reps=1), 1, (0.2, 0.3))
    fit = lmm_mle(data, sigma_known=1.0)
    axis = np.linspace(0.0, 0.8, 101)
    grid_max = max(lmm_profile_at([a, b], data, 1.0) for a in axis[::4] for b in axis[::4])
    fine = [(a, b) for a in axis if abs(a - fit.lam[0]) < 0.05 for b in axis if abs(b - fit.lam[1]) < 0.05]
    grid_max = max(grid_max, max(lmm_profile_at(p, data, 1.0) for p in fine))
    lam0 = [0.1, 0.1]
    ours = lmm_lrt(lam0, data, fit)
    brute = 2 * (grid_max - lmm_profile_at(lam0, data, 1.0))
    assert ours >= brute - 1e-9
    assert ours - brute < 2e-3


def test_model_adapter_requires_consistent_sigma(rng):
    data = random_lmm(rng)
    with pytest.raises(DomainError):
        modified_statistic(LmmModel(), ParameterPoint([0.1, 0.1], [0.0, 0.0]), data)
    with pytest.raises(DomainError):
        LmmModel(sigma_known=0.0)


def test_dimension_mismatch(rng):
    data = random_lmm(rng)
    with pytest.raises(DomainError):
        lmm_loglik(ParameterPoint([0.1], [0.0, 0.0]), data, 1.0)
