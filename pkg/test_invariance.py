import numpy as np
import pandas as pd
import pytest

from cpcm_errors import CapacityError, PreconditionError
from invariance import EnvDataset, icp_scan, pooled_residual_invariance
from simulators.benchmarks import sample_linear_env


def env_data(seed, n_per_env=300):
    dataset = sample_linear_env(n_per_env, seed, coefficients=[1.5, 0.0], shift=[2.0, 0.0])
    return EnvDataset.from_frame(dataset.frame.assign(env=dataset.env), 'y', ['x1', 'x2'])


def test_env_dataset_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(PreconditionError):
        EnvDataset(rng.normal(size=(60, 2)), rng.normal(size=59), np.repeat([0, 1], 30))
    with pytest.raises(PreconditionError, match="at least 30"):
        EnvDataset(rng.normal(size=(60, 2)), rng.normal(size=60), np.r_[np.zeros(40), np.ones(20)])
    frame = pd.DataFrame({'a': rng.normal(size=60), 'y': rng.normal(size=60), 'env': np.repeat([0, 1], 30)})
    with pytest.raises(PreconditionError):
        EnvDataset.from_frame(frame, 'y', ['b'])
    data = EnvDataset.from_frame(frame, 'y', ['a'])
    assert data.d == 1
    assert data.environments.tolist() == [0, 1]


def test_single_environment_rejected():
    rng = np.random.default_rng(1)
    data = EnvDataset(rng.normal(size=(60, 1)), rng.normal(size=60), np.zeros(60))
    with pytest.raises(PreconditionError):
        pooled_residual_invariance(data, (0,), 'gaussian_fixed_var', n_perm=19)


def test_subset_out_of_range():
    with pytest.raises(PreconditionError):
        pooled_residual_invariance(env_data(0, 60), (2,), 'gaussian_fixed_var', n_perm=19)


def test_scan_capacity():
    rng = np.random.default_rng(2)
    data = EnvDataset(rng.normal(size=(60, 11)), rng.normal(size=60), np.repeat([0, 1], 30))
    with pytest.raises(CapacityError):
        icp_scan(data, 'gaussian_fixed_var', n_perm=19)


def test_empty_set_rejected_when_target_marginal_shifts():
    result = pooled_residual_invariance(env_data(3), (), 'gaussian_fixed_var', n_perm=199, seed=1)
    assert result.p_value < 0.01


def test_scan_recovers_true_parent():
    hits = 0
    for seed in range(3):
        scan = icp_scan(env_data(seed), 'gaussian_fixed_var', n_perm=199, seed=seed)
        assert len(scan.results) == 4
        assert set(scan.estimate) <= {0}
        hits += scan.estimate == (0,)
    assert hits >= 2


def test_scan_report_and_worker_independence():
    data = env_data(4, 100)
    serial = icp_scan(data, 'gaussian_fixed_var', n_perm=49, seed=2, max_workers=1)
    parallel = icp_scan(data, 'gaussian_fixed_var', n_perm=49, seed=2, max_workers=4)
    assert [r.p_value for r in serial.results] == [r.p_value for r in parallel.results]
    payload = serial.to_dict()
    assert [s['subset'] for s in payload['subsets']] == [[], ['x1'], ['x2'], ['x1', 'x2']]
    assert payload['alpha'] == 0.05


def test_no_invariant_set_falls_back_to_full_set():
    rng = np.random.default_rng(5)
    env = np.repeat([0, 1], 150)
    x = rng.normal(size=(300, 1))
    y = x[:, 0] + np.where(env == 1, 3.0, 0.0) + rng.normal(size=300)
    scan = icp_scan(EnvDataset(x, y, env), 'gaussian_fixed_var', n_perm=199, seed=0)
    assert scan.no_invariant_set
    assert scan.estimate == (0,)
    assert scan.accepted() == []


def two_parent_data(seed, n_per_env=200):
    dataset = sample_linear_env(n_per_env, seed, coefficients=[1.5, 1.0], shift=[2.0, 0.0])
    return EnvDataset.from_frame(dataset.frame.assign(env=dataset.env), 'y', ['x1', 'x2'])


def test_dropping_shifted_parent_is_rejected():
    data = two_parent_data(6)
    without_shifted = pooled_residual_invariance(data, (1,), 'gaussian_fixed_var', n_perm=199, seed=2)
    assert without_shifted.p_value < 0.01


@pytest.mark.slow
def test_omitted_regressor_rejected_and_full_parent_set_accepted():
    rejected = accepted = 0
    for seed in range(20):
        data = two_parent_data(100 + seed)
        rejected += pooled_residual_invariance(data, (1,), 'gaussian_fixed_var', n_perm=499, seed=seed).p_value < 0.05
        accepted += pooled_residual_invariance(data, (0, 1), 'gaussian_fixed_var', n_perm=499, seed=seed).p_value >= 0.05
    assert rejected >= 14
    assert accepted >= 16


@pytest.mark.slow
def test_estimate_stays_inside_true_parents():
    covered = 0
    for seed in range(50):
        scan = icp_scan(env_data(200 + seed, 200), 'gaussian_fixed_var', alpha=0.05, n_perm=499, seed=seed)
        covered += set(scan.estimate) <= {0}
    assert covered >= 43
