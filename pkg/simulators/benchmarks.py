"""Synthetic cause-effect benchmarks: Gaussian location-scale pairs,
exponential robustness pairs and two-environment linear data."""
import logging
from enum import Enum
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.stats import truncnorm

from cpcm_errors import PreconditionError
from data_utils import make_rng
from discovery.graphs import Dag
from simulators.datasets import LabeledDataset
from simulators.unidentifiable import forward_pair_dag

GP_GRID_POINTS = 200
GP_BANDWIDTH = 1.0
GP_JITTER = 1e-6
SIGMA_RANGE = (0.1, 2.0)
ANM_SIGMA_RANGE = (1.0 / 5.0, np.sqrt(2.0 / 5.0))
CAUSE_SD = np.sqrt(2.0)
MIN_BENCHMARK_N = 100


class PairKind(str, Enum):
    ANMG = 'ANMg'
    ANMS = 'ANMs'
    MNS = 'MNs'
    LSG = 'LSg'
    LSS = 'LSs'


class RateKind(str, Enum):
    LINEAR = 'linear'
    QUADRATIC = 'quadratic'
    EXP_HALF = 'exp_half'
    GP_RANDOM = 'gp_random'


def gp_path(rng: np.random.Generator, lower: float, upper: float, n_grid: int = GP_GRID_POINTS,
            bandwidth: float = GP_BANDWIDTH):
    """Gaussian-process draw with a squared-exponential kernel on an even grid"""
    grid = np.linspace(lower, upper, n_grid)
    sq = (grid[:, np.newaxis] - grid[np.newaxis, :]) ** 2
    cov = np.exp(-sq / (2.0 * bandwidth ** 2)) + GP_JITTER * np.eye(n_grid)
    return grid, rng.multivariate_normal(np.zeros(n_grid), cov)


def gp_function(rng, x: np.ndarray) -> np.ndarray:
    grid, path = gp_path(rng, float(np.min(x)), float(np.max(x)))
    return np.interp(x, grid, path)


def gp_scale_function(rng, x: np.ndarray) -> np.ndarray:
    """Positive GP-based scale: the path rescaled to [log 0.1, log 2] and exponentiated"""
    grid, path = gp_path(rng, float(np.min(x)), float(np.max(x)))
    span = np.ptp(path)
    unit = (path - path.min()) / span if span > 0 else np.full_like(path, 0.5)
    lo, hi = np.log(SIGMA_RANGE[0]), np.log(SIGMA_RANGE[1])
    return np.exp(np.interp(x, grid, lo + unit * (hi - lo)))


def sigmoid_mean(rng, x: np.ndarray) -> np.ndarray:
    c1, c2, c3 = rng.uniform(-2.0, 2.0), rng.uniform(0.5, 2.0), rng.uniform(-2.0, 2.0)
    return c1 / (1.0 + np.exp(-c2 * (x - c3)))


def sigmoid_scale(rng, x: np.ndarray) -> np.ndarray:
    c1, c2, c3 = rng.uniform(0.5, 1.9), rng.uniform(0.5, 2.0), rng.uniform(-2.0, 2.0)
    return SIGMA_RANGE[0] + c1 / (1.0 + np.exp(-c2 * (x - c3)))


def sample_gp_benchmark(kind, n: int, seed: int) -> LabeledDataset:
    """X1 ~ N(0, sd sqrt 2), X2 = mu(X1) + sigma(X1) * N(0, 1)"""
    kind = PairKind(kind)
    if n < MIN_BENCHMARK_N:
        raise PreconditionError(f"benchmark pairs need n >= {MIN_BENCHMARK_N}, got {n}")
    rng = make_rng(seed, 'gp-benchmark', kind.value)
    x1 = rng.normal(0.0, CAUSE_SD, n)
    if kind is PairKind.ANMG:
        mu, sigma = gp_function(rng, x1), np.full(n, rng.uniform(*ANM_SIGMA_RANGE))
    elif kind is PairKind.ANMS:
        mu, sigma = sigmoid_mean(rng, x1), np.full(n, rng.uniform(*ANM_SIGMA_RANGE))
    elif kind is PairKind.MNS:
        mu, sigma = np.zeros(n), sigmoid_scale(rng, x1)
    elif kind is PairKind.LSG:
        mu, sigma = gp_function(rng, x1), gp_scale_function(rng, x1)
    else:
        mu, sigma = sigmoid_mean(rng, x1), sigmoid_scale(rng, x1)
    x2 = mu + sigma * rng.standard_normal(n)
    frame = pd.DataFrame({'x1': x1, 'x2': x2})
    meta = {'kind': kind.value, 'cause_sd': float(CAUSE_SD), 'cause_sd_note': 'N(0, sqrt 2) read as sd = sqrt 2',
            'sigma_transform': 'exp of GP path rescaled to [log 0.1, log 2]'}
    return LabeledDataset(frame, forward_pair_dag(), seed, f'gp-{kind.value}', metadata=meta)


def exp_rate(kind, x: np.ndarray, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    kind = RateKind(kind)
    if kind is RateKind.LINEAR:
        return x.copy()
    if kind is RateKind.QUADRATIC:
        return x ** 2 + 1.0
    if kind is RateKind.EXP_HALF:
        return np.exp(x) / 2.0
    return np.exp(gp_function(rng, x))


def sample_exp_robustness(alpha_kind, n: int, seed: int) -> LabeledDataset:
    """X1 ~ N(2, 1) truncated to x > 0, X2 | X1 ~ Exp(rate alpha(X1))"""
    kind = RateKind(alpha_kind)
    if n < MIN_BENCHMARK_N:
        raise PreconditionError(f"benchmark pairs need n >= {MIN_BENCHMARK_N}, got {n}")
    rng = make_rng(seed, 'exp-robustness', kind.value)
    x1 = truncnorm(a=-2.0, b=np.inf, loc=2.0, scale=1.0).rvs(size=n, random_state=rng)
    rate = exp_rate(kind, x1, rng)
    x2 = rng.exponential(1.0 / rate)
    frame = pd.DataFrame({'x1': x1, 'x2': x2})
    return LabeledDataset(frame, forward_pair_dag(), seed, f'exp-{kind.value}', metadata={'rate': kind.value})


def sample_linear_env(n_per_env: int, seed: int, coefficients: Sequence[float], shift: Sequence[float] = (),
                      target_shift: float = 0.0, noise_sd: float = 1.0) -> LabeledDataset:
    """Two environments of linear-Gaussian data Y = X b + noise

    Environment 1 shifts the mean of each covariate by ``shift`` (an
    intervention on the covariate marginals) and the noise mean of Y by
    ``target_shift``.
    """
    coefficients = np.asarray(coefficients, dtype=float)
    d = coefficients.size
    shift = np.zeros(d) if len(shift) == 0 else np.asarray(shift, dtype=float)
    if shift.size != d:
        raise PreconditionError(f"shift has {shift.size} entries for {d} covariates")
    rng = make_rng(seed, 'linear-env')
    blocks, labels = [], []
    for env in (0, 1):
        x = rng.normal(size=(n_per_env, d)) + (shift if env else 0.0)
        y = x @ coefficients + rng.normal(target_shift if env else 0.0, noise_sd, n_per_env)
        blocks.append(np.column_stack([x, y]))
        labels.append(np.full(n_per_env, env))
    names = [f"x{i + 1}" for i in range(d)] + ['y']
    frame = pd.DataFrame(np.vstack(blocks), columns=names)
    edges = [f"x{i + 1}->y" for i in range(d) if coefficients[i] != 0]
    dag = Dag.from_edges(names, edges)
    meta = {'coefficients': coefficients.tolist(), 'shift': shift.tolist(), 'target_shift': target_shift}
    logging.debug(f"Linear two-environment sample: {meta}")
    return LabeledDataset(frame, dag, seed, 'linear-env', env=np.concatenate(labels), metadata=meta)
