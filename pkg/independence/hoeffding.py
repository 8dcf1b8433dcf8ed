"""Hoeffding's D with midranks and a permutation p-value.

Without ties the bivariate ranks of every permutation are counted with a
Fenwick tree run over all permutations of a batch at once. With ties the
pairwise comparison matrices are used instead.
"""
import logging

import numpy as np
from scipy.stats import rankdata

from cpcm_errors import PreconditionError
from data_utils import as_vector
from independence.kernels import check_not_constant
from independence.results import TestMethod, TestResult, permutation_p_value, permutation_rng

MIN_HOEFFDING_SAMPLE = 10
BATCH_SIZE = 256


def hoeffding_d(r: np.ndarray, s: np.ndarray, q: np.ndarray) -> np.ndarray:
    """D from marginal ranks r, s and bivariate ranks q (last axis = observations)"""
    n = r.shape[-1]
    d1 = np.sum((q - 1.0) * (q - 2.0), axis=-1)
    d2 = np.sum((r - 1.0) * (r - 2.0) * (s - 1.0) * (s - 2.0), axis=-1)
    d3 = np.sum((r - 2.0) * (s - 2.0) * (q - 1.0), axis=-1)
    numerator = (n - 2.0) * (n - 3.0) * d1 + d2 - 2.0 * (n - 2.0) * d3
    return 30.0 * numerator / (n * (n - 1.0) * (n - 2.0) * (n - 3.0) * (n - 4.0))


def _comparison_weights(values: np.ndarray) -> np.ndarray:
    """w[i, j] = 1 if values[j] < values[i], 1/2 on ties (j != i), else 0"""
    diff = values[:, np.newaxis] - values[np.newaxis, :]
    weights = (diff > 0).astype(float) + 0.5 * (diff == 0)
    np.fill_diagonal(weights, 0.0)
    return weights


def _lower_left_counts(s_in_r_order: np.ndarray) -> np.ndarray:
    """For each row, how many earlier entries are smaller (entries are ranks 1..n)"""
    batch, n = s_in_r_order.shape
    tree = np.zeros((batch, n + 1), dtype=np.int64)
    counts = np.empty((batch, n), dtype=np.int64)
    rows = np.arange(batch)
    for i in range(n):
        value = s_in_r_order[:, i]
        idx = value - 1
        total = np.zeros(batch, dtype=np.int64)
        active = idx > 0
        while active.any():
            total[active] += tree[rows[active], idx[active]]
            idx = np.where(active, idx - (idx & -idx), 0)
            active = idx > 0
        counts[:, i] = total
        idx = value.copy()
        active = idx <= n
        while active.any():
            tree[rows[active], idx[active]] += 1
            idx = np.where(active, idx + (idx & -idx), n + 1)
            active = idx <= n
    return counts


def _permuted_statistics_distinct(r: np.ndarray, s: np.ndarray, perms: np.ndarray) -> np.ndarray:
    order = np.argsort(r)
    r_sorted = r[order].astype(float)
    s_perm = s[perms][:, order].astype(np.int64)
    q = 1.0 + _lower_left_counts(s_perm)
    return hoeffding_d(r_sorted[np.newaxis, :], s_perm.astype(float), q)


def _permuted_statistics_tied(wu: np.ndarray, wv: np.ndarray, r: np.ndarray, s: np.ndarray,
                              perms: np.ndarray) -> np.ndarray:
    out = np.empty(perms.shape[0])
    for b, p in enumerate(perms):
        q = 1.0 + np.sum(wu * wv[np.ix_(p, p)], axis=1)
        out[b] = hoeffding_d(r, s[p], q)
    return out


def hoeffding_d_test(u, v, n_perm: int = 999, seed: int = 0) -> TestResult:
    """Hoeffding's D independence test, permutation-calibrated"""
    u = as_vector(u, 'u')
    v = as_vector(v, 'v')
    if u.size != v.size:
        raise PreconditionError(f"u and v must have equal length, got {u.size} and {v.size}")
    n = u.size
    if n < MIN_HOEFFDING_SAMPLE:
        raise PreconditionError(f"Hoeffding's D needs n >= {MIN_HOEFFDING_SAMPLE}, got {n}")
    check_not_constant(u, 'u')
    check_not_constant(v, 'v')

    r = rankdata(u, method='average')
    s = rankdata(v, method='average')
    has_ties = np.unique(u).size < n or np.unique(v).size < n
    wu = wv = None
    if has_ties:
        wu = _comparison_weights(u)
        wv = _comparison_weights(v)
        observed = float(hoeffding_d(r, s, 1.0 + np.sum(wu * wv, axis=1)))
    else:
        observed = float(_permuted_statistics_distinct(r, s, np.arange(n)[np.newaxis, :])[0])

    rng = permutation_rng(seed)
    perms = np.array([rng.permutation(n) for _ in range(n_perm)]).reshape(n_perm, n)
    permuted = np.empty(n_perm)
    for start in range(0, n_perm, BATCH_SIZE):
        chunk = perms[start:start + BATCH_SIZE]
        if has_ties:
            permuted[start:start + chunk.shape[0]] = _permuted_statistics_tied(wu, wv, r, s, chunk)
        else:
            permuted[start:start + chunk.shape[0]] = _permuted_statistics_distinct(r, s, chunk)
    p_value = permutation_p_value(observed, permuted)
    logging.debug(f"Hoeffding D n={n}: statistic {observed:.6g}, p={p_value:.4f}, ties={has_ties}")
    return TestResult(
        statistic=observed,
        p_value=p_value,
        method=TestMethod.HOEFFDING_D,
        n_permutations=n_perm,
        seed=seed,
        calibration={'ranks': 'midranks', 'ties': bool(has_ties)},
    )
