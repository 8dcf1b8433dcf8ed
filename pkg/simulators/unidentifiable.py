"""Generators and density oracles for the non-identifiable constructions.

Pareto: X1 has density proportional to 1 / ((a log x + b) x^(d+1)) on [1, inf)
and X2 | X1 ~ Pareto(a log X1 + b). The reversed model with constants
(a, d, b) yields the same joint density.

Gaussian: 1/sigma^2(x) = a x^2 + c, mu(x)/sigma^2(x) = d + e x and X1 with
density proportional to sigma(x) exp(-((x - alpha)^2 / beta^2 - mu^2 / sigma^2) / 2).
"""
import logging
from functools import lru_cache
from typing import NamedTuple, Tuple

import numpy as np
import pandas as pd
from scipy.integrate import quad
from scipy.stats import norm

from cpcm_errors import NumericalError, PreconditionError
from data_utils import make_rng
from discovery.graphs import Dag
from discovery.identifiability import backward_gaussian_params
from distributions.expfam import get_family
from simulators.datasets import LabeledDataset

PAIR = ('x1', 'x2')
QUAD_OPTIONS = {'epsabs': 1e-13, 'epsrel': 1e-12, 'limit': 500}


class BackwardParetoParams(NamedTuple):
    alpha: float
    beta: float
    delta: float


def _check_positive(**values):
    bad = {k: v for k, v in values.items() if not v > 0}
    if bad:
        raise PreconditionError(f"constants must be positive, got {bad}")


def backward_pareto_params(a: float, b: float, d: float) -> BackwardParetoParams:
    """theta~(y) = alpha log y + beta with Y marginal of the same form and exponent delta"""
    _check_positive(a=a, b=b, d=d)
    return BackwardParetoParams(alpha=a, beta=d, delta=b)


def forward_pair_dag() -> Dag:
    return Dag.from_edges(PAIR, ['x1->x2'])


# -- Pareto construction --------------------------------------------------

def pareto_marginal_unnormalised(x, a: float, b: float, d: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        out = 1.0 / ((a * np.log(x) + b) * x ** (d + 1.0))
    return np.where(x >= 1.0, out, 0.0)


@lru_cache(maxsize=64)
def pareto_normaliser(a: float, b: float, d: float) -> float:
    # substitute x = exp(t) so the integrand decays exponentially
    value, _ = quad(lambda t: np.exp(-d * t) / (a * t + b), 0.0, np.inf, **QUAD_OPTIONS)
    return value


def pareto_marginal_density(x, a: float, b: float, d: float) -> np.ndarray:
    _check_positive(a=a, b=b, d=d)
    return pareto_marginal_unnormalised(x, a, b, d) / pareto_normaliser(a, b, d)


def _pareto_conditional(y, theta) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        out = theta * y ** (-(theta + 1.0))
    return np.where(y >= 1.0, out, 0.0)


def pareto_forward_joint_density(x, y, a: float, b: float, d: float) -> np.ndarray:
    """p_X(x) p_{Y|X}(y | x) with Y | X ~ Pareto(a log x + b)"""
    x = np.asarray(x, dtype=float)
    theta = a * np.log(np.maximum(x, 1.0)) + b
    return pareto_marginal_density(x, a, b, d) * _pareto_conditional(y, theta)


def pareto_backward_joint_density(x, y, a: float, b: float, d: float) -> np.ndarray:
    """p_Y(y) p_{X|Y}(x | y) under the reversed constants"""
    alpha, beta, delta = backward_pareto_params(a, b, d)
    y = np.asarray(y, dtype=float)
    theta = alpha * np.log(np.maximum(y, 1.0)) + beta
    return pareto_marginal_density(y, alpha, beta, delta) * _pareto_conditional(x, theta)


def sample_pareto_marginal(a: float, b: float, d: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection from a Pareto(d) proposal; acceptance probability b / (a log x + b)"""
    _check_positive(a=a, b=b, d=d)
    accepted = []
    total = 0
    while total < n:
        batch = max(64, int(1.5 * (n - total)) + 16)
        proposal = (1.0 - rng.uniform(size=batch)) ** (-1.0 / d)
        keep = rng.uniform(size=batch) < b / (a * np.log(proposal) + b)
        accepted.append(proposal[keep])
        total += int(keep.sum())
    return np.concatenate(accepted)[:n]


def _pareto_pair(x1: np.ndarray, theta: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    return get_family('pareto').ppf(theta[:, np.newaxis], rng.uniform(np.finfo(float).tiny, 1.0, x1.size))


def sample_pareto_unidentifiable(a: float, b: float, d: float, n: int, seed: int) -> LabeledDataset:
    _check_positive(a=a, b=b, d=d)
    rng = make_rng(seed, 'pareto-unidentifiable')
    x1 = sample_pareto_marginal(a, b, d, n, rng)
    x2 = _pareto_pair(x1, a * np.log(x1) + b, rng)
    frame = pd.DataFrame({'x1': x1, 'x2': x2})
    meta = {'a': a, 'b': b, 'd': d, 'backward': backward_pareto_params(a, b, d)._asdict()}
    return LabeledDataset(frame, forward_pair_dag(), seed, 'pareto-unidentifiable', metadata=meta)


def pareto_power_theta(x, alpha: float) -> np.ndarray:
    """theta(x) = x^alpha log x + 1"""
    x = np.asarray(x, dtype=float)
    return x ** alpha * np.log(x) + 1.0


def sample_pareto_power_pair(alpha: float, n: int, seed: int) -> LabeledDataset:
    """X1 with density proportional to 1 / ((log x + 1) x^2), X2 | X1 ~ Pareto(x^alpha log x + 1)"""
    rng = make_rng(seed, 'pareto-fig2')
    x1 = sample_pareto_marginal(1.0, 1.0, 1.0, n, rng)
    x2 = _pareto_pair(x1, pareto_power_theta(x1, alpha), rng)
    frame = pd.DataFrame({'x1': x1, 'x2': x2})
    return LabeledDataset(frame, forward_pair_dag(), seed, 'pareto-fig2', metadata={'alpha': alpha})


# operation name matching the pareto-fig2 scenario id
sample_pareto_figure2 = sample_pareto_power_pair


# -- Gaussian construction ------------------------------------------------

def check_gaussian_constants(a, c, d, e, alpha, beta):
    if a < 0 or c <= 0 or beta <= 0:
        raise PreconditionError(f"need a >= 0, c > 0, beta > 0; got a={a}, c={c}, beta={beta}")
    if a == 0 and not 1.0 / beta ** 2 > e ** 2 / c:
        raise PreconditionError(f"density of X1 is not normalisable: with a=0 it needs 1/beta^2 > e^2/c "
                                f"(got {1.0 / beta ** 2:g} <= {e ** 2 / c:g})")


def gaussian_log_marginal_unnormalised(x, a, c, d, e, alpha, beta) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    precision = a * x ** 2 + c
    return -0.5 * np.log(precision) - 0.5 * (x - alpha) ** 2 / beta ** 2 + 0.5 * (d + e * x) ** 2 / precision


def _tail_scale(a, c, e, beta) -> float:
    tail_precision = 1.0 / beta ** 2 - (e ** 2 / c if a == 0 else 0.0)
    return 1.0 / np.sqrt(tail_precision)


@lru_cache(maxsize=64)
def gaussian_marginal_moments(a, c, d, e, alpha, beta) -> Tuple[float, float, float, float]:
    """(log normaliser, mean, sd, log shift) of the X1 density by quadrature"""
    check_gaussian_constants(a, c, d, e, alpha, beta)
    scale = _tail_scale(a, c, e, beta)
    grid = np.linspace(alpha - 40 * scale, alpha + 40 * scale, 20001)
    shift = float(np.max(gaussian_log_marginal_unnormalised(grid, a, c, d, e, alpha, beta)))

    def kernel(x):
        return np.exp(gaussian_log_marginal_unnormalised(x, a, c, d, e, alpha, beta) - shift)

    z, _ = quad(kernel, -np.inf, np.inf, **QUAD_OPTIONS)
    mean = quad(lambda x: x * kernel(x), -np.inf, np.inf, **QUAD_OPTIONS)[0] / z
    var = quad(lambda x: (x - mean) ** 2 * kernel(x), -np.inf, np.inf, **QUAD_OPTIONS)[0] / z
    return float(np.log(z)), float(mean), float(np.sqrt(var)), shift


def gaussian_marginal_density(x, a, c, d, e, alpha, beta) -> np.ndarray:
    log_z, _, _, shift = gaussian_marginal_moments(a, c, d, e, alpha, beta)
    return np.exp(gaussian_log_marginal_unnormalised(x, a, c, d, e, alpha, beta) - shift - log_z)


def gaussian_conditional_params(x, a, c, d, e) -> Tuple[np.ndarray, np.ndarray]:
    """(mu(x), sigma(x)) of X2 | X1 = x"""
    x = np.asarray(x, dtype=float)
    precision = a * x ** 2 + c
    return (d + e * x) / precision, 1.0 / np.sqrt(precision)


def gaussian_forward_joint_density(x, y, a, c, d, e, alpha, beta) -> np.ndarray:
    mu, sigma = gaussian_conditional_params(x, a, c, d, e)
    return gaussian_marginal_density(x, a, c, d, e, alpha, beta) * norm.pdf(y, mu, sigma)


def gaussian_backward_joint_density(x, y, a, c, d, e, alpha, beta) -> np.ndarray:
    back = backward_gaussian_params(a, c, d, e, alpha, beta)
    mu, sigma = gaussian_conditional_params(y, back.a, back.c, back.d, back.e)
    return gaussian_marginal_density(y, *back) * norm.pdf(x, mu, sigma)


def sample_gaussian_marginal(a, c, d, e, alpha, beta, n: int, rng: np.random.Generator) -> np.ndarray:
    """Rejection from a Gaussian envelope fitted to the target's moments"""
    log_z, mean, sd, shift = gaussian_marginal_moments(a, c, d, e, alpha, beta)
    env_sd = max(1.5 * sd, 1.1 * _tail_scale(a, c, e, beta))
    grid = np.linspace(mean - 12 * env_sd, mean + 12 * env_sd, 20001)
    log_ratio = (gaussian_log_marginal_unnormalised(grid, a, c, d, e, alpha, beta) - shift
                 - norm.logpdf(grid, mean, env_sd))
    log_bound = float(np.max(log_ratio)) + np.log(1.05)

    accepted = []
    total = 0
    while total < n:
        batch = max(64, 2 * (n - total) + 16)
        proposal = rng.normal(mean, env_sd, batch)
        ratio = (gaussian_log_marginal_unnormalised(proposal, a, c, d, e, alpha, beta) - shift
                 - norm.logpdf(proposal, mean, env_sd))
        if np.any(ratio > log_bound):
            raise NumericalError(f"Gaussian envelope fails to dominate the target at x={proposal[ratio > log_bound][0]:.4g}")
        keep = np.log(rng.uniform(size=batch)) < ratio - log_bound
        accepted.append(proposal[keep])
        total += int(keep.sum())
    return np.concatenate(accepted)[:n]


def sample_gaussian_unidentifiable(a, c, d, e, alpha, beta, n: int, seed: int) -> LabeledDataset:
    check_gaussian_constants(a, c, d, e, alpha, beta)
    rng = make_rng(seed, 'gaussian-unidentifiable')
    x1 = sample_gaussian_marginal(a, c, d, e, alpha, beta, n, rng)
    mu, sigma = gaussian_conditional_params(x1, a, c, d, e)
    x2 = mu + sigma * rng.standard_normal(n)
    frame = pd.DataFrame({'x1': x1, 'x2': x2})
    meta = {'a': a, 'c': c, 'd': d, 'e': e, 'alpha': alpha, 'beta': beta,
            'backward': backward_gaussian_params(a, c, d, e, alpha, beta)._asdict()}
    logging.debug(f"Gaussian non-identifiable sample: n={n}, constants {meta}")
    return LabeledDataset(frame, forward_pair_dag(), seed, 'gaussian-unidentifiable', metadata=meta)
