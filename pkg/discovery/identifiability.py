"""Numeric identifiability diagnostics.

A CPCM(F1, F2) pair can only be non-identifiable when the forward parameter
map is an affine combination of the cause family's sufficient statistics.
The checks here test that membership by least squares.
"""
import logging
from typing import NamedTuple

import numpy as np

from cpcm_errors import PreconditionError
from data_utils import as_column_matrix, as_vector
from distributions.expfam import get_family
from estimators.smooth_mle import ThetaModel, predict_params

ANALYTIC_TOL = 1e-6
ESTIMATED_TOL = 0.05
MIN_GRID = 20


class LinearCombinationResult(NamedTuple):
    is_linear_combo: bool
    max_rel_residual: float
    rank_deficient: bool
    coefficients: np.ndarray


def _relative_residual(target: np.ndarray, fitted: np.ndarray) -> float:
    spread = np.linalg.norm(target - target.mean())
    resid = np.linalg.norm(target - fitted)
    if spread <= 1e-12 * max(1.0, np.linalg.norm(target)):
        return 0.0 if resid <= 1e-12 * max(1.0, np.linalg.norm(target)) else np.inf
    return float(resid / spread)


def linear_combination_check(theta_values, stat_values, tol: float = ANALYTIC_TOL) -> LinearCombinationResult:
    """Regress each theta column on [1, T columns]; linear iff every relative residual <= tol"""
    theta = as_column_matrix(theta_values, 'theta_values')
    stats = as_column_matrix(stat_values, 'stat_values')
    m, q1 = stats.shape
    if theta.shape[0] != m:
        raise PreconditionError(f"theta has {theta.shape[0]} rows but the statistics have {m}")
    if m <= q1 + 1:
        raise PreconditionError(f"need more than {q1 + 1} grid points, got {m}")
    if not (np.all(np.isfinite(theta)) and np.all(np.isfinite(stats))):
        raise PreconditionError("theta and statistic values must be finite")

    regressors = np.column_stack([np.ones(m), stats])
    coefficients, _, rank, _ = np.linalg.lstsq(regressors, theta, rcond=None)
    rank_deficient = rank < regressors.shape[1]
    if rank_deficient:
        logging.warning(f"Sufficient-statistic regressors have rank {rank} < {regressors.shape[1]}; "
                        f"checking on the reduced column space")
    fitted = regressors @ coefficients
    worst = max(_relative_residual(theta[:, k], fitted[:, k]) for k in range(theta.shape[1]))
    return LinearCombinationResult(bool(worst <= tol), float(worst), bool(rank_deficient), coefficients)


def gaussian_nonidentifiability_check(x_grid, mu_values, sigma_values, tol: float = ANALYTIC_TOL) -> bool:
    """True iff 1/sigma^2 = a x^2 + c (a >= 0, c > 0) and mu/sigma^2 = d + e x"""
    x = as_vector(x_grid, 'x_grid')
    mu = as_vector(mu_values, 'mu_values')
    sigma = as_vector(sigma_values, 'sigma_values')
    if not (x.size == mu.size == sigma.size):
        raise PreconditionError("x, mu and sigma grids must have equal length")
    if x.size < MIN_GRID:
        raise PreconditionError(f"need at least {MIN_GRID} grid points, got {x.size}")
    if np.any(sigma <= 0):
        raise PreconditionError("sigma must be positive on the grid")
    precision = 1.0 / sigma ** 2
    quad = linear_combination_check(precision, x ** 2, tol)
    c, a = quad.coefficients[:, 0]
    scale = max(1.0, abs(c))
    if not quad.is_linear_combo or a < -tol * scale or c <= 0:
        return False
    return linear_combination_check(mu * precision, x, tol).is_linear_combo


def pareto_nonidentifiability_check(x_grid, theta_values, tol: float = ANALYTIC_TOL) -> LinearCombinationResult:
    """theta(x) = a log x + b with a, b > 0 is the only non-identifiable Pareto form"""
    x = as_vector(x_grid, 'x_grid')
    if np.any(x < 1):
        raise PreconditionError("Pareto grid must lie in [1, inf)")
    result = linear_combination_check(theta_values, np.log(x), tol)
    b, a = result.coefficients[:, 0]
    return result._replace(is_linear_combo=bool(result.is_linear_combo and a > 0 and b > 0))


def estimated_identifiability_check(model: ThetaModel, cause_family, x_grid,
                                    tol: float = ESTIMATED_TOL) -> LinearCombinationResult:
    """Is the fitted theta-hat of effect | cause affine in the cause family's statistics?"""
    family = get_family(cause_family)
    x = as_vector(x_grid, 'x_grid')
    theta = predict_params(model, x[:, np.newaxis]).values
    stats = family.sufficient_statistics(x)
    result = linear_combination_check(theta, stats, tol)
    logging.info(f"Estimated theta vs {family.id} statistics: max relative residual {result.max_rel_residual:.4f}")
    return result


class BackwardGaussianParams(NamedTuple):
    a: float
    c: float
    d: float
    e: float
    alpha: float
    beta: float


def backward_gaussian_params(a: float, c: float, d: float, e: float, alpha: float, beta: float) -> BackwardGaussianParams:
    """Constants of the reversed Gaussian model that produces the same joint law"""
    if a < 0 or c <= 0 or beta <= 0:
        raise PreconditionError(f"need a >= 0, c > 0, beta > 0; got a={a}, c={c}, beta={beta}")
    return BackwardGaussianParams(a=a, c=1.0 / beta ** 2, d=alpha / beta ** 2, e=e,
                                  alpha=d / c, beta=1.0 / np.sqrt(c))
