import logging
import warnings
from typing import Sequence

import numpy as np
from scipy.stats import anderson_ksamp

from cpcm_errors import DegenerateInputError, PreconditionError
from data_utils import as_vector
from independence.results import TestMethod, TestResult, permutation_p_value, permutation_rng

MIN_GROUP_SIZE = 5


def _ad_statistic(samples) -> float:
    with warnings.catch_warnings():
        warnings.simplefilter('ignore')
        return float(anderson_ksamp(samples, midrank=True).statistic)


def ad_ksample_test(groups: Sequence, n_perm: int = 999, seed: int = 0) -> TestResult:
    """k-sample Anderson-Darling homogeneity test with permuted group labels"""
    if len(groups) < 2:
        raise PreconditionError(f"k-sample test needs at least 2 groups, got {len(groups)}")
    samples = [as_vector(g, f'group {i}') for i, g in enumerate(groups)]
    sizes = [s.size for s in samples]
    if min(sizes) < MIN_GROUP_SIZE:
        raise PreconditionError(f"every group needs at least {MIN_GROUP_SIZE} values, got sizes {sizes}")
    pooled = np.concatenate(samples)
    if np.ptp(pooled) == 0:
        raise DegenerateInputError("all pooled values are identical")

    observed = _ad_statistic(samples)
    cuts = np.cumsum(sizes)[:-1]
    rng = permutation_rng(seed)
    permuted = np.empty(n_perm)
    for b in range(n_perm):
        shuffled = pooled[rng.permutation(pooled.size)]
        permuted[b] = _ad_statistic(np.split(shuffled, cuts))
    p_value = permutation_p_value(observed, permuted)
    logging.debug(f"AD k-sample k={len(samples)} sizes={sizes}: statistic {observed:.4f}, p={p_value:.4f}")
    return TestResult(
        statistic=observed,
        p_value=p_value,
        method=TestMethod.AD_KSAMPLE,
        n_permutations=n_perm,
        seed=seed,
        calibration={'ranks': 'midranks', 'group_sizes': sizes},
    )
