import numpy as np
import pytest

from lstobit import (
    Dataset,
    FitConfig,
    LogNormal,
    LogStudentT,
    ModelSpec,
    ParamVector,
    default_xi_grid,
    fit,
    hessian,
    initial_theta,
    percent_effect,
    score,
    select_q,
)

from conftest import simulate_tobit


def test_ols_equality_uncensored_lognormal():
    rng = np.random.default_rng(31)
    n = 200
    x1 = rng.normal(size=n)
    x2 = rng.random(n)
    X = np.column_stack([np.ones(n), x1, x2])
    logt = 0.4 + 0.8 * x1 - 0.5 * x2 + 0.6 * rng.standard_normal(n)
    t = np.exp(logt)
    psi = 0.5 * t.min()
    data = Dataset(t, np.zeros(n, dtype=bool), X, np.ones((n, 1)), psi)
    spec = ModelSpec(LogNormal(), q=0.5, psi=psi)
    res = fit(spec, data)
    assert res.converged
    beta_ols, *_ = np.linalg.lstsq(X, logt, rcond=None)
    assert np.max(np.abs(res.theta_hat.beta - beta_ols)) < 1e-6
    rss = np.mean((logt - X @ beta_ols) ** 2)
    assert np.isclose(res.theta_hat.kappa[0], np.log(rss), atol=1e-6)


def test_single_point_grid_equals_fixed_fit():
    gen = LogStudentT(4.0)
    data = simulate_tobit(gen, q=0.5, n=120, seed=17, censoring=0.1)
    spec = ModelSpec(gen, q=0.5, psi=data.psi)
    fixed = fit(spec, data, FitConfig(xi_grid=None))
    gridded = fit(spec, data, FitConfig(xi_grid=[4.0]))
    assert fixed.xi_hat == 4.0 and gridded.xi_hat == 4.0
    assert np.allclose(fixed.theta_hat.to_array(), gridded.theta_hat.to_array(), atol=1e-9)
    assert np.isclose(fixed.loglik, gridded.loglik, atol=1e-9)


def test_initial_theta_recovers_noiseless_coefficients():
    n = 25
    x = np.linspace(-1, 1, n)
    X = np.column_stack([np.ones(n), x])
    beta_true = np.array([0.7, -0.3])
    t = np.exp(X @ beta_true)
    psi = 0.5 * t.min()
    data = Dataset(t, np.zeros(n, dtype=bool), X, np.ones((n, 1)), psi)
    spec = ModelSpec(LogNormal(), q=0.5, psi=psi)
    theta0 = initial_theta(spec, data)
    assert np.max(np.abs(theta0.beta - beta_true)) < 1e-10
    assert np.isclose(theta0.kappa[0], np.log(1e-6))


def test_initial_theta_variance_floor():
    n = 10
    data = Dataset(np.full(n, 2.0), np.zeros(n, dtype=bool),
                   np.ones((n, 1)), np.ones((n, 1)), psi=1.0)
    spec = ModelSpec(LogNormal(), q=0.5, psi=1.0)
    theta0 = initial_theta(spec, data)
    assert np.isfinite(theta0.kappa[0])
    assert theta0.kappa[0] == np.log(1e-6)


def test_initial_theta_speeds_up_convergence():
    gen = LogNormal()
    wins = 0
    for trial in range(100):
        data = simulate_tobit(gen, q=0.5, n=80, seed=1000 + trial, censoring=0.1)
        spec = ModelSpec(gen, q=0.5, psi=data.psi)
        nb, nw = data.X.shape[1], data.W.shape[1]
        warm = fit(spec, data, FitConfig(restarts=0))
        cold = fit(spec, data, FitConfig(
            restarts=0, theta0=ParamVector(np.zeros(nb), np.zeros(nw))))
        if warm.n_iter < cold.n_iter:
            wins += 1
    assert wins >= 80


def test_percent_effect_values():
    assert round(float(percent_effect(0.0974)), 2) == 10.23
    assert round(float(percent_effect(0.0383)), 2) == 3.90
    assert percent_effect(0.0) == 0.0


def test_se_shrinks_with_duplicated_data():
    gen = LogNormal()
    data = simulate_tobit(gen, q=0.5, n=250, seed=23, censoring=0.1)
    spec = ModelSpec(gen, q=0.5, psi=data.psi)
    doubled = Dataset(
        np.concatenate([data.t, data.t]),
        np.concatenate([data.is_censored, data.is_censored]),
        np.vstack([data.X, data.X]),
        np.vstack([data.W, data.W]),
        data.psi,
    )
    r1 = fit(spec, data)
    r2 = fit(spec, doubled)
    assert r1.converged and r2.converged
    ratio = r1.se / r2.se
    assert np.all(np.abs(ratio - np.sqrt(2.0)) < 0.02 * np.sqrt(2.0))


def test_aic_bic_arithmetic_identity():
    gen = LogNormal()
    data = simulate_tobit(gen, q=0.5, n=90, seed=41, censoring=0.1)
    spec = ModelSpec(gen, q=0.5, psi=data.psi)
    res = fit(spec, data)
    p = res.n_params
    assert res.aic == -2.0 * res.loglik + 2.0 * p
    assert res.bic == -2.0 * res.loglik + p * np.log(data.n)
    assert p == data.X.shape[1] + data.W.shape[1]


def test_profile_trace_consistency():
    gen = LogStudentT(6.0)
    data = simulate_tobit(gen, q=0.5, n=250, seed=7, censoring=0.1)
    spec = ModelSpec(gen, q=0.5, psi=data.psi)
    res = fit(spec, data, FitConfig(xi_grid=[2.0, 4.0, 6.0, 10.0]))
    assert res.converged
    assert res.xi_hat in {2.0, 4.0, 6.0, 10.0}
    assert all(res.loglik >= ll for _, ll in res.profile_trace)
    assert any(xi == res.xi_hat and ll == res.loglik for xi, ll in res.profile_trace)


def test_convergence_first_order_conditions():
    gen = LogStudentT(4.0)
    data = simulate_tobit(gen, q=0.7, n=180, seed=19, censoring=0.2)
    spec = ModelSpec(gen, q=0.7, psi=data.psi)
    cfg = FitConfig()
    res = fit(spec, data, cfg)
    assert res.converged
    g = score(spec, data, res.theta_hat)
    assert np.max(np.abs(g)) <= cfg.grad_tol * data.n
    assert np.max(np.abs(g)) < 1e-5
    assert np.all(np.linalg.eigvalsh(-hessian(spec, data, res.theta_hat)) > 0)
    assert np.all(res.se > 0)


def test_default_xi_grids():
    assert default_xi_grid("lognormal") is None
    assert default_xi_grid("logt") == [float(v) for v in range(1, 21)]
    grid_pe = default_xi_grid("logpe")
    assert grid_pe[0] == -0.9 and grid_pe[-1] == 1.0 and len(grid_pe) == 20
    grid_ebs = default_xi_grid("ebs")
    assert grid_ebs[0] == 0.1 and grid_ebs[-1] == 2.0 and len(grid_ebs) == 20
    with pytest.raises(ValueError):
        default_xi_grid("weibull")


def test_select_q_single_level():
    gen = LogNormal()
    data = simulate_tobit(gen, q=0.5, n=100, seed=3, censoring=0.1)
    spec = ModelSpec(gen, q=0.5, psi=data.psi)
    sel = select_q(spec, data, FitConfig(), [0.35])
    assert sel.q_otm == 0.35
    assert sel.result.q == 0.35


def test_select_q_tie_rule_constant_aic():
    # intercept-only dispersion: the maximized likelihood is the same at
    # every q, so the tie rule must return the smallest level
    gen = LogNormal()
    base = simulate_tobit(gen, q=0.5, n=150, seed=29, censoring=0.1)
    data = Dataset(base.t, base.is_censored, base.X, np.ones((base.n, 1)), base.psi)
    spec = ModelSpec(gen, q=0.5, psi=data.psi)
    sel = select_q(spec, data, FitConfig(), [0.75, 0.25, 0.5])
    assert sel.q_otm == 0.25
    aics = [row["aic"] for row in sel.trace]
    assert max(aics) - min(aics) < 1e-6


def test_select_q_deterministic():
    gen = LogNormal()
    data = simulate_tobit(gen, q=0.5, n=150, seed=47, censoring=0.1)
    spec = ModelSpec(gen, q=0.5, psi=data.psi)
    s1 = select_q(spec, data, FitConfig(seed=5), [0.2, 0.5, 0.8])
    s2 = select_q(spec, data, FitConfig(seed=5), [0.2, 0.5, 0.8])
    assert s1.q_otm == s2.q_otm
    assert np.array_equal(s1.result.theta_hat.to_array(), s2.result.theta_hat.to_array())


def test_reparameterization_identity_across_q():
    gen = LogNormal()
    base = simulate_tobit(gen, q=0.5, n=300, seed=53, censoring=0.15)
    data = Dataset(base.t, base.is_censored, base.X, np.ones((base.n, 1)), base.psi)
    results = {}
    for q in (0.05, 0.5, 0.95):
        spec = ModelSpec(gen, q=q, psi=data.psi)
        results[q] = fit(spec, data)
        assert results[q].converged
    lls = [r.loglik for r in results.values()]
    assert max(lls) - min(lls) < 1e-6
    phi_hat = np.exp(results[0.5].theta_hat.kappa[0])
    for qa, qb in ((0.05, 0.5), (0.5, 0.95), (0.05, 0.95)):
        za, zb = gen.inv_cdf(qa), gen.inv_cdf(qb)
        delta = results[qb].theta_hat.beta[0] - results[qa].theta_hat.beta[0]
        assert abs(delta - np.sqrt(phi_hat) * (zb - za)) < 1e-5
        # slopes are q-invariant
        assert np.isclose(results[qa].theta_hat.beta[1],
                          results[qb].theta_hat.beta[1], atol=1e-6)


def test_fit_scale_equivariance():
    gen = LogNormal()
    data = simulate_tobit(gen, q=0.5, n=200, seed=59, censoring=0.1)
    spec = ModelSpec(gen, q=0.5, psi=data.psi)
    c = 4.0
    scaled = Dataset(data.t * c, data.is_censored, data.X, data.W, data.psi * c)
    spec_c = ModelSpec(gen, q=0.5, psi=data.psi * c)
    r = fit(spec, data)
    rc = fit(spec_c, scaled)
    assert np.isclose(rc.theta_hat.beta[0] - r.theta_hat.beta[0], np.log(c), atol=1e-6)
    assert np.allclose(rc.theta_hat.beta[1:], r.theta_hat.beta[1:], atol=1e-6)
    assert np.allclose(rc.theta_hat.kappa, r.theta_hat.kappa, atol=1e-6)


def test_laplace_boundary_maximizes_despite_kink():
    # at xi = 1 the kernel is Laplace-like, so the score need not vanish at
    # the optimum; the likelihood value must still match a derivative-free
    # search even when the gradient criterion reports non-convergence
    from scipy.optimize import minimize

    from lstobit import LogPowerExponential
    from lstobit.model import _loglik_score_flat

    gen = LogPowerExponential(1.0)
    data = simulate_tobit(gen, q=0.5, n=120, seed=71, censoring=0.1)
    spec = ModelSpec(gen, q=0.5, psi=data.psi)
    res = fit(spec, data, FitConfig(compute_se=False))
    assert np.isfinite(res.loglik)

    x0 = initial_theta(spec, data).to_array()
    nm = minimize(
        lambda v: -_loglik_score_flat(spec, data, v, want_score=False)[0],
        x0,
        method="Nelder-Mead",
        options={"maxiter": 8000, "xatol": 1e-9, "fatol": 1e-11},
    )
    assert res.loglik >= -nm.fun - 1e-4


def test_singular_information_reported_without_se(monkeypatch):
    from lstobit import estimator, model

    gen = LogNormal()
    data = simulate_tobit(gen, q=0.5, n=60, seed=67, censoring=0.1)
    spec = ModelSpec(gen, q=0.5, psi=data.psi)
    real = model._hessian_flat
    state = {"fit_done": False}

    def flat_hessian(spec_, data_, x, rel_step=None):
        if state["fit_done"]:
            return np.zeros((x.size, x.size))  # not negative definite
        return real(spec_, data_, x, rel_step=rel_step)

    monkeypatch.setattr(model, "_hessian_flat", flat_hessian)
    monkeypatch.setattr(estimator.model, "_hessian_flat", flat_hessian)

    # run the optimizer normally, then report a degenerate curvature
    cfg = FitConfig()
    theta = fit(spec, data, FitConfig(compute_se=False)).theta_hat
    state["fit_done"] = True
    res = fit(spec, data, FitConfig(theta0=theta))
    assert res.singular_info
    assert np.all(np.isnan(res.se))
    assert res.cov is None


def test_fit_preconditions():
    gen = LogNormal()
    data = simulate_tobit(gen, q=0.5, n=40, seed=61, censoring=0.1)
    with pytest.raises(ValueError, match="psi"):
        fit(ModelSpec(gen, q=0.5, psi=data.psi * 2), data)
    # nearly everything censored: too little information
    heavy = simulate_tobit(gen, q=0.5, n=6, seed=61, censoring=0.8)
    with pytest.raises(ValueError, match="uncensored"):
        fit(ModelSpec(gen, q=0.5, psi=heavy.psi), heavy)
    with pytest.raises(ValueError):
        fit(ModelSpec(gen, q=0.5, psi=data.psi), data, FitConfig(xi_grid=[]))
    with pytest.raises(ValueError):
        FitConfig(grad_tol=0.0)
