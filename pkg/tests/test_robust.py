import numpy as np
import pytest
from scipy.optimize import minimize
from scipy.special import gammaln

from bumphunt.basis import evaluate_basis, rescale_times
from bumphunt.robust import (FitError, InsufficientDataError, PriorConfig,
                             e_step, fit_alternative, fit_em, fit_null,
                             m_step, t_log_likelihood)
from bumphunt.simulator import SimulationConfig, curve_rng, simulate_event, simulate_null

from conftest import make_curve, make_design


def test_e_step_closed_form_values():
    assert e_step([0.0], 1.0, 5.0)[0] == pytest.approx(1.2)
    assert e_step([1.0], 1.0, 5.0)[0] == pytest.approx(1.0)
    w = e_step([0.0, 0.5, 1.0, 2.0, 10.0, 1e8], 1.0, 5.0)
    assert np.all(np.diff(w) < 0)
    assert w[-1] < 1e-12
    assert np.all(w > 0) and np.all(w <= 1.2)


def test_e_step_requires_positive_scale():
    with pytest.raises(ValueError):
        e_step([1.0], 0.0, 5.0)


def test_m_step_reduces_to_ols_when_unit_weights_and_tiny_tau():
    rng = np.random.default_rng(0)
    x = np.hstack([np.ones((40, 1)), rng.standard_normal((40, 3))])
    y = rng.standard_normal(40)
    beta, _ = m_step(x, y, np.ones(40), tau=1e-12)
    ols, *_ = np.linalg.lstsq(x, y, rcond=None)
    assert np.abs(beta - ols).max() < 1e-9


def test_m_step_dominating_penalty_shrinks_all_but_constant():
    rng = np.random.default_rng(1)
    w = rng.uniform(0.5, 1.2, 50)
    x = np.hstack([np.ones((50, 1)), rng.standard_normal((50, 4))])
    y = rng.standard_normal(50) + 3.0
    beta, _ = m_step(x, y, w, tau=1e12)
    assert np.abs(beta[1:]).max() <= 1e-6
    assert beta[0] == pytest.approx((w * y).sum() / w.sum(), rel=1e-9)


def test_m_step_matches_dense_oracle_on_random_instance():
    rng = np.random.default_rng(2)
    x = np.hstack([np.ones((64, 1)), rng.standard_normal((64, 16))])
    y = rng.standard_normal(64)
    w = rng.uniform(0.2, 1.2, 64)
    tau = 0.01
    beta, sigma2 = m_step(x, y, w, tau)
    # independent dense solve of the same normal equations
    d = np.eye(17)
    d[0, 0] = 0.0
    a = x.T @ (w[:, None] * x) + tau * d
    oracle = np.linalg.solve(a, x.T @ (w * y))
    assert np.abs(beta - oracle).max() / np.abs(oracle).max() < 1e-10
    r = y - x @ beta
    expect_s2 = ((w * r * r).sum() + tau * (beta[1:] @ beta[1:])) / (64 + 16 + 2)
    assert sigma2 == pytest.approx(expect_s2, rel=1e-12)


def test_m_step_rejects_bad_input():
    x = np.ones((10, 2))
    with pytest.raises(FitError):
        m_step(x, np.full(10, np.nan), np.ones(10), 0.01)
    with pytest.raises(FitError):
        m_step(x, np.ones(10), np.zeros(10), 0.01)


def test_t_loglik_closed_form_at_mode():
    nu, s2 = 5.0, 0.49
    got = t_log_likelihood([0.0], s2, nu)
    expected = (gammaln(3.0) - gammaln(2.5)
                - 0.5 * np.log(nu * np.pi) - 0.5 * np.log(s2))
    assert got == pytest.approx(expected, abs=1e-12)


def test_t_loglik_location_scale_identity():
    rng = np.random.default_rng(3)
    r = rng.standard_t(5, 20)
    for c in (0.1, 2.0, 17.5):
        lhs = t_log_likelihood(r, 1.3, 5.0)
        rhs = t_log_likelihood(r / c, 1.3 / c ** 2, 5.0) - len(r) * np.log(c)
        assert lhs == pytest.approx(rhs, abs=1e-9)


def test_t_loglik_against_high_precision_oracle():
    import mpmath

    mpmath.mp.dps = 40
    nu, s2 = 5.0, 0.7
    rng = np.random.default_rng(4)
    r = rng.standard_t(5, 10)
    acc = mpmath.mpf(0)
    for ri in r:
        z = mpmath.mpf(float(ri)) / mpmath.sqrt(s2)
        dens = (mpmath.gamma((nu + 1) / 2)
                / (mpmath.gamma(nu / 2) * mpmath.sqrt(nu * mpmath.pi))
                * (1 + z * z / nu) ** (-(nu + 1) / 2)) / mpmath.sqrt(s2)
        acc += mpmath.log(dens)
    got = t_log_likelihood(r, s2, nu)
    assert abs(got - float(acc)) < 1e-10 * abs(float(acc))


def _sim_instance(seed, n=512, noise=0.1):
    rng = np.random.default_rng(seed)
    t = np.sort(rng.uniform(0.0, 2555.0, n))
    t += np.linspace(0, 1e-3, n)  # guard against ties
    y = (0.2 * np.sin(t / 400.0) + noise * rng.standard_t(5, n))
    return t, y


def test_fit_em_noise_free_recovers_truth(small_spec):
    rng = np.random.default_rng(5)
    t = np.sort(rng.uniform(0.0, 1000.0, 160))
    # full-interval rescale: every basis function is well observed
    design = make_design(small_spec, t, span_fraction=1.0)
    beta_true = 0.03 * rng.standard_normal(17)
    beta_true[1:9] -= beta_true[1:9].mean()  # identifiable representation
    y = design.values @ beta_true
    fit = fit_em(y, design.values, PriorConfig(tau=1e-7), tol=1e-12)
    assert fit.converged
    assert np.abs(fit.beta - beta_true).max() <= 1e-6
    assert fit.sigma2 <= 1e-10


def test_fit_em_matches_independent_optimizer(small_spec):
    # oracle: generic quasi-Newton maximizer of the same penalized objective,
    # written out independently of the EM implementation
    nu, tau = 5.0, 0.01

    def neg_log_posterior(theta, x, y):
        beta, log_s2 = theta[:-1], theta[-1]
        s2 = np.exp(log_s2)
        r = y - x @ beta
        n, m = x.shape[0], x.shape[1] - 1
        loglik = (n * (gammaln((nu + 1) / 2) - gammaln(nu / 2)
                       - 0.5 * np.log(nu * np.pi * s2))
                  - (nu + 1) / 2 * np.log1p(r * r / (nu * s2)).sum())
        prior = (-0.5 * m * np.log(2 * np.pi * s2 / tau)
                 - tau * (beta[1:] @ beta[1:]) / (2 * s2) - log_s2)
        return -(loglik + prior)

    worst = 0.0
    for seed in range(3):
        t, y = _sim_instance(seed + 10, n=512)
        design = make_design(small_spec, t)
        x = design.values
        fit = fit_em(y, x, PriorConfig(), tol=1e-13, max_iter=2000)
        assert fit.converged
        x0 = np.zeros(x.shape[1] + 1)
        x0[-1] = np.log(np.var(y))
        res = minimize(neg_log_posterior, x0, args=(x, y), method="L-BFGS-B",
                       options=dict(maxiter=50000, maxfun=200000,
                                    ftol=1e-16, gtol=1e-11))
        oracle = res.x
        em = np.concatenate([fit.beta, [np.log(fit.sigma2)]])
        scale = max(1.0, np.abs(oracle).max())
        worst = max(worst, np.abs(em - oracle).max() / scale)
        assert fit.sigma2 == pytest.approx(np.exp(oracle[-1]), rel=1e-4)
    assert worst < 1e-4


def test_monotone_log_posterior_and_weight_range(small_spec):
    for seed in range(20):
        t, y = _sim_instance(seed + 50, n=300)
        design = make_design(small_spec, t)
        fit = fit_em(y, design.values, PriorConfig())
        diffs = np.diff(fit.trace)
        assert diffs.min() >= -1e-8
        assert np.all(fit.weights > 0)
        assert np.all(fit.weights <= 1.2 + 1e-15)


def test_accelerated_and_plain_reach_same_fixed_point(small_spec):
    t, y = _sim_instance(99, n=400)
    design = make_design(small_spec, t)
    fast = fit_em(y, design.values, PriorConfig(), tol=1e-12, accelerate=True)
    slow = fit_em(y, design.values, PriorConfig(), tol=1e-12, accelerate=False)
    assert fast.converged and slow.converged
    assert np.abs(fast.beta - slow.beta).max() < 1e-6
    assert fast.sigma2 == pytest.approx(slow.sigma2, rel=1e-6)


def test_fit_is_deterministic(small_spec):
    t, y = _sim_instance(123, n=300)
    design = make_design(small_spec, t)
    a = fit_em(y, design.values, PriorConfig())
    b = fit_em(y, design.values, PriorConfig())
    assert np.array_equal(a.beta, b.beta)
    assert a.sigma2 == b.sigma2
    assert a.loglik == b.loglik


def test_insufficient_data_refused(small_spec):
    t = np.linspace(0, 100, 20)
    design = make_design(small_spec, t)
    curve = make_curve(t, np.zeros(20))
    with pytest.raises(InsufficientDataError):
        fit_alternative(curve, design, PriorConfig())


def test_null_and_alternative_column_counts(full_spec):
    sim = SimulationConfig(n_obs_range=(300, 320), seed=9)
    curve = simulate_null(sim, curve_rng(1, 0)).negated()
    design = make_design(full_spec, curve.times)
    null_fit = fit_null(curve, design, PriorConfig())
    alt_fit = fit_alternative(curve, design, PriorConfig())
    assert len(null_fit.beta) == 9
    assert len(alt_fit.beta) == 129


def test_event_curve_prefers_alternative_model(small_spec, fast_sim):
    curve, truth = simulate_event(fast_sim, curve_rng(2, 7))
    design = make_design(small_spec, curve.times)
    fit0 = fit_null(curve.negated(), design, PriorConfig())
    fit1 = fit_alternative(curve.negated(), design, PriorConfig())
    assert fit1.loglik > fit0.loglik


def test_flat_noise_curve_trend_blocks_agree(small_spec):
    rng = np.random.default_rng(31)
    t = np.sort(rng.uniform(0, 1000, 260))
    y = 0.05 * rng.standard_t(5, 260)
    curve = make_curve(t, y)
    design = make_design(small_spec, t)
    fit0 = fit_null(curve, design, PriorConfig())
    fit1 = fit_alternative(curve, design, PriorConfig())
    trend0 = design.trend_columns @ fit0.beta
    trend1 = design.trend_columns @ fit1.beta[:9]
    # pure-noise curve: both models see the same (absent) trend
    assert np.abs(trend0 - trend1).max() < 5 * 0.05


def test_single_outlier_moves_t_fit_less_than_gaussian_smoke(small_spec):
    wins = 0
    trials = 15
    for seed in range(trials):
        rng = np.random.default_rng(400 + seed)
        t = np.sort(rng.uniform(0, 1000, 300))
        y = 0.15 * np.sin(t / 150.0) + 0.08 * rng.standard_normal(300)
        design = make_design(small_spec, t)
        x = design.values
        pos = rng.integers(50, 250)
        y_out = y.copy()
        y_out[pos] += 10 * 0.08

        prior = PriorConfig()
        t_base = x @ fit_em(y, x, prior).beta
        t_pert = x @ fit_em(y_out, x, prior).beta
        beta_g = np.linalg.solve(x.T @ x + prior.tau * np.diag([0.0] + [1.0] * 16),
                                 x.T @ y)
        beta_g_out = np.linalg.solve(x.T @ x + prior.tau * np.diag([0.0] + [1.0] * 16),
                                     x.T @ y_out)
        mask = np.arange(300) != pos
        t_move = np.abs(t_pert - t_base)[mask].mean()
        g_move = np.abs(x @ beta_g_out - x @ beta_g)[mask].mean()
        wins += t_move < g_move
    assert wins >= int(0.6 * trials)
