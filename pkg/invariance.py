"""Invariant-residual subset screening across environments.

For a candidate covariate set S the target is fitted on the pooled data,
PIT residuals are split by environment and compared with a k-sample
Anderson-Darling test. Sets whose residuals look identical in every
environment are accepted; the estimate is the intersection of accepted sets.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from cpcm_errors import CapacityError, PreconditionError
from data_utils import as_column_matrix, as_vector, derive_seed, empirical_pit, require_finite
from distributions.expfam import get_family
from estimators.smooth_mle import fit_conditional, pit_residuals
from independence.anderson_darling import ad_ksample_test
from independence.results import TestResult

MIN_ENV_ROWS = 30
MAX_SCAN_COVARIATES = 10


@dataclass
class EnvDataset:
    x: np.ndarray
    y: np.ndarray
    env: np.ndarray
    names: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.x = as_column_matrix(self.x, 'x')
        self.y = as_vector(self.y, 'y')
        self.env = np.asarray(self.env).astype(int)
        if not (self.x.shape[0] == self.y.size == self.env.size):
            raise PreconditionError("x, y and env must have the same number of rows")
        require_finite(self.x, 'x')
        require_finite(self.y, 'y')
        if not self.names:
            self.names = [f"x{i + 1}" for i in range(self.x.shape[1])]
        labels, counts = np.unique(self.env, return_counts=True)
        small = {int(l): int(c) for l, c in zip(labels, counts) if c < MIN_ENV_ROWS}
        if small:
            raise PreconditionError(f"every environment needs at least {MIN_ENV_ROWS} rows, got {small}")

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, target: str, covariates: Sequence[str], env_column: str = 'env'):
        missing = [c for c in list(covariates) + [target, env_column] if c not in frame.columns]
        if missing:
            raise PreconditionError(f"columns not found: {missing}")
        return cls(frame[list(covariates)].to_numpy(dtype=float), frame[target].to_numpy(dtype=float),
                   frame[env_column].to_numpy(), list(covariates))

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def environments(self) -> np.ndarray:
        return np.unique(self.env)


@dataclass
class SubsetResult:
    subset: Tuple[int, ...]
    p_value: float
    plausible: bool
    test: TestResult


@dataclass
class InvarianceScan:
    results: List[SubsetResult]
    estimate: Tuple[int, ...]
    alpha: float
    no_invariant_set: bool
    names: List[str] = field(default_factory=list)

    def accepted(self) -> List[Tuple[int, ...]]:
        return [r.subset for r in self.results if r.plausible]

    def to_dict(self) -> dict:
        def label(subset):
            return [self.names[i] for i in subset]

        return {
            'alpha': self.alpha,
            'estimate': label(self.estimate),
            'no_invariant_set': self.no_invariant_set,
            'subsets': [{'subset': label(r.subset), 'p_value': r.p_value, 'plausible': r.plausible}
                        for r in self.results],
        }


def pooled_residual_invariance(data: EnvDataset, subset: Sequence[int], family, n_perm: int = 999,
                               seed: int = 0, fit_options: Optional[dict] = None) -> TestResult:
    """AD test of pooled-fit PIT residuals across environments"""
    envs = data.environments
    if envs.size < 2:
        raise PreconditionError(f"invariance testing needs at least 2 environments, got {envs.size}")
    subset = tuple(sorted(int(i) for i in subset))
    if any(not 0 <= i < data.d for i in subset):
        raise PreconditionError(f"subset {subset} out of range for {data.d} covariates")
    if subset:
        covariates = data.x[:, list(subset)]
        model, diagnostics = fit_conditional(get_family(family), covariates, data.y, **(fit_options or {}))
        if not diagnostics.converged:
            logging.warning(f"Pooled fit on subset {subset} did not converge")
        residuals = pit_residuals(model, covariates, data.y)
    else:
        residuals = empirical_pit(data.y)
    groups = [residuals[data.env == e] for e in envs]
    return ad_ksample_test(groups, n_perm=n_perm, seed=seed)


def _subset_from_mask(mask: int, d: int) -> Tuple[int, ...]:
    return tuple(i for i in range(d) if mask >> i & 1)


def icp_scan(data: EnvDataset, family, alpha: float = 0.05, n_perm: int = 999, seed: int = 0,
             max_workers: int = 1, fit_options: Optional[dict] = None) -> InvarianceScan:
    """Test every covariate subset; estimate = intersection of the accepted ones"""
    if data.d > MAX_SCAN_COVARIATES:
        raise CapacityError(f"subset scan is capped at {MAX_SCAN_COVARIATES} covariates "
                            f"(2^d = {2 ** data.d} subsets requested)")
    masks = list(range(2 ** data.d))
    logging.info(f"Scanning {len(masks)} covariate subsets over {data.environments.size} environments")

    def run(mask):
        subset = _subset_from_mask(mask, data.d)
        test = pooled_residual_invariance(data, subset, family, n_perm=n_perm,
                                          seed=derive_seed(seed, 'subset', mask), fit_options=fit_options)
        return SubsetResult(subset, test.p_value, test.p_value >= alpha, test)

    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        results = list(executor.map(run, masks))

    accepted = [set(r.subset) for r in results if r.plausible]
    if accepted:
        estimate = tuple(sorted(set.intersection(*accepted)))
        flag = False
    else:
        estimate = tuple(range(data.d))
        flag = True
        logging.warning("No covariate subset passed the invariance test")
    logging.info(f"Invariant-set estimate: {[data.names[i] for i in estimate]} "
                 f"({len(accepted)} of {len(results)} subsets accepted)")
    return InvarianceScan(results, estimate, alpha, flag, list(data.names))
