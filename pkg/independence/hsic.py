"""Kernel independence tests: pairwise HSIC and the d-variable joint statistic."""
import logging
from typing import Sequence

import numpy as np

from cpcm_errors import PreconditionError
from data_utils import as_vector
from independence.kernels import centre_gram, check_not_constant, gaussian_gram, median_bandwidth
from independence.results import TestMethod, TestResult, permutation_p_value, permutation_rng

MIN_KERNEL_SAMPLE = 20


def _checked_pair(u, v):
    u = as_vector(u, 'u')
    v = as_vector(v, 'v')
    if u.size != v.size:
        raise PreconditionError(f"u and v must have equal length, got {u.size} and {v.size}")
    if u.size < MIN_KERNEL_SAMPLE:
        raise PreconditionError(f"kernel tests need n >= {MIN_KERNEL_SAMPLE}, got {u.size}")
    check_not_constant(u, 'u')
    check_not_constant(v, 'v')
    return u, v


def hsic_statistic(k_centred: np.ndarray, l_gram: np.ndarray) -> float:
    """Biased V-statistic trace(K H L H) / n^2"""
    n = k_centred.shape[0]
    return float(np.sum(k_centred * l_gram)) / (n * n)


def hsic_test(u, v, n_perm: int = 499, seed: int = 0, max_bandwidth_points: int = 1000) -> TestResult:
    """HSIC with Gaussian kernels and a permutation p-value (v permuted)"""
    u, v = _checked_pair(u, v)
    bw_u = median_bandwidth(u, max_bandwidth_points)
    bw_v = median_bandwidth(v, max_bandwidth_points)
    k_centred = centre_gram(gaussian_gram(u, bw_u))
    l_gram = gaussian_gram(v, bw_v)
    observed = hsic_statistic(k_centred, l_gram)

    rng = permutation_rng(seed)
    permuted = np.empty(n_perm)
    for b in range(n_perm):
        p = rng.permutation(u.size)
        permuted[b] = hsic_statistic(k_centred, l_gram[np.ix_(p, p)])
    p_value = permutation_p_value(observed, permuted)
    logging.debug(f"HSIC n={u.size}: statistic {observed:.6g}, p={p_value:.4f}")
    return TestResult(
        statistic=observed,
        p_value=p_value,
        method=TestMethod.HSIC,
        n_permutations=n_perm,
        seed=seed,
        calibration={'kernel': 'gaussian', 'bandwidth': 'median heuristic', 'bandwidths': [bw_u, bw_v]},
    )


def joint_hsic_statistic(grams: Sequence[np.ndarray]) -> float:
    """d-variable HSIC: product kernel against the product of marginal means"""
    n = grams[0].shape[0]
    prod = np.ones_like(grams[0])
    mean_prod = 1.0
    row_prod = np.ones(n)
    for gram in grams:
        prod = prod * gram
        mean_prod *= gram.mean()
        row_prod = row_prod * gram.mean(axis=1)
    return float(prod.mean() + mean_prod - 2.0 * row_prod.mean())


def joint_indep_test(columns: Sequence, n_perm: int = 499, seed: int = 0,
                     max_bandwidth_points: int = 1000) -> TestResult:
    """Mutual independence of d columns, columns 2..d permuted independently"""
    if len(columns) < 2:
        raise PreconditionError(f"joint independence test needs d >= 2 columns, got {len(columns)}")
    cols = [as_vector(c, f'column {j}') for j, c in enumerate(columns)]
    n = cols[0].size
    if any(c.size != n for c in cols):
        raise PreconditionError("all columns must have the same length")
    if n < MIN_KERNEL_SAMPLE:
        raise PreconditionError(f"kernel tests need n >= {MIN_KERNEL_SAMPLE}, got {n}")
    for j, c in enumerate(cols):
        check_not_constant(c, f'column {j}')

    bandwidths = [median_bandwidth(c, max_bandwidth_points) for c in cols]
    grams = [gaussian_gram(c, bw) for c, bw in zip(cols, bandwidths)]
    observed = joint_hsic_statistic(grams)

    rng = permutation_rng(seed)
    permuted = np.empty(n_perm)
    for b in range(n_perm):
        shuffled = [grams[0]]
        for gram in grams[1:]:
            p = rng.permutation(n)
            shuffled.append(gram[np.ix_(p, p)])
        permuted[b] = joint_hsic_statistic(shuffled)
    p_value = permutation_p_value(observed, permuted)
    logging.debug(f"Joint HSIC d={len(cols)} n={n}: statistic {observed:.6g}, p={p_value:.4f}")
    return TestResult(
        statistic=observed,
        p_value=p_value,
        method=TestMethod.JOINT_PERM,
        n_permutations=n_perm,
        seed=seed,
        calibration={'kernel': 'gaussian', 'bandwidth': 'median heuristic', 'bandwidths': bandwidths},
    )
