import json

import numpy as np
import pytest
from scipy.interpolate import BSpline
from scipy.stats import kstest

from cpcm_errors import DegenerateInputError, DomainError, PreconditionError
from distributions.expfam import get_family
from estimators.smooth_mle import (GRADIENT_TOL, ROUNDING_SLACK, PenalizedLikelihood, ThetaModel, _design,
                                   _penalty_matrix, constant_model, fit_conditional, newton_fit, pit_residuals,
                                   predict_params)
from estimators.spline_basis import SplineBasis


def sample_pareto_linear(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(1.0, 3.0, n)
    theta = 2.0 + x
    y = get_family('pareto').ppf(theta[:, np.newaxis], rng.uniform(size=n))
    return x, y


def sample_gamma_conditional(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.5, 2.5, n)
    theta = np.column_stack([1.0 + x, 2.0 + np.sin(x)])
    y = get_family('gamma').ppf(theta, rng.uniform(size=n))
    return x, y


def test_pareto_recovery():
    x, y = sample_pareto_linear(2000, seed=4)
    model, diagnostics = fit_conditional('pareto', x, y)
    predicted = predict_params(model, np.array([[2.0], [1.5]]))
    assert diagnostics.converged
    assert abs(predicted[0][0] - 4.0) < 0.25
    assert abs(predicted[1][0] - 3.5) < 0.25
    assert not predicted.extrapolated.any()


def test_constant_mean_recovery():
    rng = np.random.default_rng(2)
    x = rng.uniform(-2.0, 2.0, 500)
    y = 5.0 + 0.0 * x + rng.normal(size=500)
    model, _ = fit_conditional('gaussian_fixed_var', x, y)
    grid = np.linspace(-2.0, 2.0, 50)[:, np.newaxis]
    assert np.max(np.abs(predict_params(model, grid).values[:, 0] - 5.0)) < 0.3


def test_degenerate_covariate_rejected():
    rng = np.random.default_rng(0)
    y = rng.gamma(2.0, 1.0, 100)
    with pytest.raises(DegenerateInputError, match="degenerate covariate"):
        fit_conditional('gamma', np.full(100, 3.0), y)


def test_fit_preconditions():
    rng = np.random.default_rng(0)
    with pytest.raises(PreconditionError):
        fit_conditional('gamma', rng.uniform(size=20), rng.gamma(2.0, 1.0, 20))
    with pytest.raises(DomainError):
        fit_conditional('pareto', rng.uniform(size=50), rng.uniform(0.1, 0.9, 50))


def test_constant_model_predicts_constant():
    model = constant_model('gamma', [2.0, 3.0])
    values = predict_params(model, np.linspace(-1.0, 4.0, 7)[:, np.newaxis]).values
    assert np.allclose(values, [[2.0, 3.0]] * 7)


def test_prediction_at_knot_matches_basis_expansion():
    x, y = sample_pareto_linear(400, seed=1)
    model, _ = fit_conditional('pareto', x, y)
    basis = model.bases[0]
    knot = basis.interior_knots[3]
    raw = BSpline(basis.knots, np.eye(basis.n_basis), basis.degree)(knot)
    eta = model.coefficients[0, 0] + (raw - basis.column_means)[:-1] @ model.coefficients[0, 1:]
    assert predict_params(model, [[knot]])[0][0] == pytest.approx(np.exp(eta), rel=1e-12)


def test_prediction_outside_range_is_flagged():
    x, y = sample_pareto_linear(400, seed=1)
    model, _ = fit_conditional('pareto', x, y)
    predicted = predict_params(model, [[0.5], [2.0], [3.5]])
    assert predicted.extrapolated.tolist() == [True, False, True]
    assert np.all(predicted.values > 0)


def test_prediction_dimension_mismatch():
    model = constant_model('gaussian', [0.0, 1.0])
    with pytest.raises(PreconditionError):
        predict_params(model, np.zeros((3, 2)))


def linear_mean_model(slope):
    """GaussianFixedVariance model with mu(x) = slope * x on [0, 1], built by hand"""
    model = constant_model('gaussian_fixed_var', [0.0])
    mean_b0 = model.bases[0].column_means[0]
    model.coefficients[0] = [slope * (1.0 - mean_b0), -slope]
    return model


def test_true_parameter_pit_is_uniform():
    model = linear_mean_model(2.0)
    hits = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        x = rng.uniform(size=400)
        y = 2.0 * x + rng.normal(size=400)
        residuals = pit_residuals(model, x, y)
        if kstest(residuals, 'uniform').statistic < 1.36 / np.sqrt(400):
            hits += 1
    assert hits >= 18


def test_pit_boundary_values():
    assert pit_residuals(constant_model('pareto', [2.0]), [0.5], [1.0])[0] == 0.0
    assert pit_residuals(constant_model('gaussian', [0.0, 1.0]), [0.5], [0.0])[0] == pytest.approx(0.5)


def test_fit_is_invariant_to_row_order():
    x, y = sample_gamma_conditional(240, seed=3)
    perm = np.random.default_rng(9).permutation(240)
    model_a, _ = fit_conditional('gamma', x, y)
    model_b, _ = fit_conditional('gamma', x[perm], y[perm])
    assert np.max(np.abs(model_a.coefficients - model_b.coefficients)) <= 1e-10
    assert model_a.smoothing == model_b.smoothing


def test_penalized_score_matches_finite_differences():
    rng = np.random.default_rng(21)
    settings = {
        'gaussian': (0.0, 1.5), 'gaussian_fixed_var': (1.0,), 'gamma': (2.0, 1.5),
        'gamma_fixed_scale': (2.0,), 'exponential': (1.5,), 'pareto': (2.0,), 'beta': (2.0, 3.0),
    }
    for family_id, params in settings.items():
        fam = get_family(family_id)
        x = rng.uniform(0.0, 1.0, 200)
        y = fam.ppf(fam.param_matrix(params, 200), rng.uniform(0.02, 0.98, 200))
        basis = SplineBasis.from_covariate(x, n_interior=4, degree=3)
        design, _ = _design([basis], x[:, np.newaxis])
        penalty, ridge = _penalty_matrix([basis])
        objective = PenalizedLikelihood(fam, design, y, [0.5] * fam.q, penalty, ridge)
        start = np.zeros((fam.q, design.shape[1]))
        start[:, 0] = fam.theta_to_links(np.array([params]))[0]
        for _ in range(5):
            beta = start.ravel() + rng.normal(0.0, 0.05, start.size)
            analytic = objective.gradient(beta)
            numeric = np.empty_like(beta)
            for i in range(beta.size):
                step = np.zeros_like(beta)
                step[i] = 1e-5
                numeric[i] = (objective.value(beta + step) - objective.value(beta - step)) / 2e-5
            assert np.linalg.norm(numeric - analytic) <= 1e-4 * np.linalg.norm(analytic) + 1e-6, family_id


def test_newton_never_lowers_objective():
    x, y = sample_gamma_conditional(300, seed=5)
    basis = SplineBasis.from_covariate(x, n_interior=10, degree=3)
    design, _ = _design([basis], x[:, np.newaxis])
    penalty, ridge = _penalty_matrix([basis])
    objective = PenalizedLikelihood(get_family('gamma'), design, y, [1.0, 1.0], penalty, ridge)
    seen = []
    value = objective.value

    def recording_value(beta):
        result = value(beta)
        seen.append(result)
        return result

    objective.value = recording_value
    start = np.zeros(2 * design.shape[1])
    start[0], start[design.shape[1]] = np.log(2.0), np.log(1.0)
    _, diagnostics = newton_fit(objective, start)
    slack = ROUNDING_SLACK * max(1.0, abs(max(seen)))
    assert diagnostics.converged
    assert diagnostics.final_penalized_loglik > seen[0]
    assert diagnostics.final_penalized_loglik >= max(seen) - 10 * slack


def test_convergence_is_judged_on_raw_gradient():
    x, y = sample_gamma_conditional(2000, seed=12)
    basis = SplineBasis.from_covariate(x, n_interior=10, degree=3)
    design, _ = _design([basis], x[:, np.newaxis])
    penalty, ridge = _penalty_matrix([basis])
    objective = PenalizedLikelihood(get_family('gamma'), design, y, [1.0, 1.0], penalty, ridge)
    start = np.zeros(2 * design.shape[1])
    start[0], start[design.shape[1]] = np.log(2.0), np.log(1.0)
    beta, diagnostics = newton_fit(objective, start)
    raw = float(np.max(np.abs(objective.gradient(beta))))
    assert diagnostics.gradient_max_norm == pytest.approx(raw)
    assert diagnostics.gradient_per_observation == pytest.approx(raw / 2000)
    assert diagnostics.converged
    assert raw < GRADIENT_TOL


def test_converged_fits_report_small_raw_gradient():
    for seed in range(3):
        x, y = sample_gamma_conditional(1500, seed=seed)
        _, diagnostics = fit_conditional('gamma', x, y, smoothing=1.0)
        assert diagnostics.converged
        assert diagnostics.gradient_max_norm < GRADIENT_TOL
        assert diagnostics.to_dict()['gradient_max_norm'] == diagnostics.gradient_max_norm


def test_non_convergence_is_reported_not_raised():
    x, y = sample_gamma_conditional(200, seed=8)
    _, diagnostics = fit_conditional('gamma', x, y, smoothing=1.0, max_iter=0)
    assert diagnostics.converged is False
    assert diagnostics.newton_iterations == 0


def test_linear_special_case_recovers_least_squares_slopes():
    rng = np.random.default_rng(17)
    x = rng.normal(size=(10000, 2))
    y = 1.0 + 0.8 * x[:, 0] - 0.5 * x[:, 1] + rng.normal(size=10000)
    model, diagnostics = fit_conditional('gaussian_fixed_var', x, y, smoothing=0.0, degree=1, n_interior_knots=0)
    intercepts, slopes = model.linear_coefficients()
    assert diagnostics.smoothing_source == 'fixed'
    assert np.max(np.abs(slopes[0] - [0.8, -0.5])) < 0.05
    assert abs(intercepts[0] - 1.0) < 0.05


def test_additive_fit_with_two_covariates():
    rng = np.random.default_rng(6)
    x = rng.uniform(0.0, 2.0, size=(600, 2))
    rate = np.exp(0.5 * x[:, 0] - 0.3 * x[:, 1])
    y = rng.exponential(1.0 / rate)
    model, diagnostics = fit_conditional('exponential', x, y)
    assert diagnostics.converged
    assert model.n_covariates == 2
    predicted = predict_params(model, [[1.0, 1.0]])[0][0]
    assert abs(np.log(predicted) - 0.2) < 0.3


def test_model_json_round_trip():
    x, y = sample_pareto_linear(300, seed=2)
    model, _ = fit_conditional('pareto', x, y)
    restored = ThetaModel.from_dict(json.loads(json.dumps(model.to_dict())))
    grid = np.linspace(0.5, 3.5, 9)[:, np.newaxis]
    assert np.allclose(predict_params(restored, grid).values, predict_params(model, grid).values, rtol=1e-12)
    assert restored.per_param[0]['link'] == 'log'
