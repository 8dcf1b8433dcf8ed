import numpy as np
import pytest
from scipy.stats import rankdata

from cpcm_errors import DegenerateInputError, PreconditionError
from independence.anderson_darling import ad_ksample_test
from independence.hoeffding import _comparison_weights, hoeffding_d, hoeffding_d_test
from independence.hsic import hsic_test, joint_hsic_statistic, joint_indep_test
from independence.kernels import centre_gram, gaussian_gram, median_bandwidth
from independence.results import TestMethod, permutation_p_value


def test_hsic_detects_identical_inputs():
    hits = 0
    for seed in range(10):
        u = np.random.default_rng(seed).normal(size=200)
        if hsic_test(u, u, n_perm=199, seed=seed).p_value < 0.01:
            hits += 1
    assert hits == 10


def test_hsic_result_metadata():
    rng = np.random.default_rng(1)
    result = hsic_test(rng.normal(size=60), rng.normal(size=60), n_perm=99, seed=5)
    assert result.method is TestMethod.HSIC
    assert result.n_permutations == 99
    assert 1.0 / 100 <= result.p_value <= 1.0
    payload = result.to_dict()
    assert payload['method'] == 'hsic'
    assert payload['calibration']['bandwidth'] == 'median heuristic'


def test_hsic_input_errors():
    rng = np.random.default_rng(0)
    with pytest.raises(PreconditionError):
        hsic_test(rng.normal(size=50), rng.normal(size=40))
    with pytest.raises(PreconditionError):
        hsic_test(rng.normal(size=10), rng.normal(size=10))
    with pytest.raises(DegenerateInputError):
        hsic_test(np.ones(50), rng.normal(size=50))


def test_tests_are_deterministic_given_seed():
    rng = np.random.default_rng(3)
    u, v = rng.normal(size=80), rng.normal(size=80)
    assert hsic_test(u, v, n_perm=99, seed=7) == hsic_test(u, v, n_perm=99, seed=7)
    assert hoeffding_d_test(u, v, n_perm=99, seed=7) == hoeffding_d_test(u, v, n_perm=99, seed=7)
    assert joint_indep_test([u, v, u + v], n_perm=49, seed=7) == joint_indep_test([u, v, u + v], n_perm=49, seed=7)
    assert ad_ksample_test([u, v], n_perm=99, seed=7) == ad_ksample_test([u, v], n_perm=99, seed=7)


def test_hsic_decision_invariant_under_exp_transform():
    agree = 0
    for seed in range(20):
        rng = np.random.default_rng(100 + seed)
        u = rng.normal(size=120)
        v = 0.4 * u + rng.normal(size=120) if seed % 2 else rng.normal(size=120)
        plain = hsic_test(u, v, n_perm=199, seed=seed).p_value < 0.05
        transformed = hsic_test(np.exp(u), v, n_perm=199, seed=seed).p_value < 0.05
        agree += plain == transformed
    assert agree >= 16


def test_median_bandwidth_matches_definition():
    x = np.array([0.0, 1.0, 3.0])
    # squared distances 1, 9, 4 -> median 4
    assert median_bandwidth(x) == pytest.approx(np.sqrt(2.0))
    big = np.random.default_rng(0).normal(size=5000)
    assert median_bandwidth(big, max_points=1000) > 0


def test_centred_gram_has_zero_row_sums():
    x = np.random.default_rng(2).normal(size=30)
    centred = centre_gram(gaussian_gram(x, 1.0))
    assert np.allclose(centred.sum(axis=0), 0.0)
    assert np.allclose(centred.sum(axis=1), 0.0)


def test_hoeffding_identical_inputs_is_maximal():
    u = np.random.default_rng(4).normal(size=100)
    result = hoeffding_d_test(u, u)
    assert result.p_value == pytest.approx(1.0 / 1000)
    assert result.method is TestMethod.HOEFFDING_D


def test_hoeffding_fast_path_matches_pairwise_formula():
    rng = np.random.default_rng(8)
    u, v = rng.normal(size=60), rng.normal(size=60) + 0.3 * np.arange(60) / 60
    r, s = rankdata(u), rankdata(v)
    q = 1.0 + np.sum(_comparison_weights(u) * _comparison_weights(v), axis=1)
    assert hoeffding_d_test(u, v, n_perm=9).statistic == pytest.approx(float(hoeffding_d(r, s, q)), rel=1e-12)


def test_hoeffding_with_ties_uses_midranks():
    rng = np.random.default_rng(9)
    u = rng.integers(0, 5, size=80).astype(float)
    v = u + rng.integers(0, 2, size=80)
    result = hoeffding_d_test(u, v, n_perm=199, seed=1)
    assert result.calibration['ties'] is True
    assert result.p_value < 0.01


def test_hoeffding_preconditions():
    with pytest.raises(PreconditionError):
        hoeffding_d_test(np.arange(5.0), np.arange(5.0))
    with pytest.raises(DegenerateInputError):
        hoeffding_d_test(np.zeros(20), np.arange(20.0))


def test_joint_statistic_reduces_to_hsic_for_two_columns():
    rng = np.random.default_rng(5)
    u, v = rng.normal(size=50), rng.normal(size=50)
    k, l = gaussian_gram(u, 1.0), gaussian_gram(v, 0.7)
    hsic_value = float(np.sum(centre_gram(k) * l)) / 50 ** 2
    assert joint_hsic_statistic([k, l]) == pytest.approx(hsic_value, rel=1e-10)


def test_joint_test_detects_duplicated_column():
    hits = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        u, w = rng.normal(size=200), rng.normal(size=200)
        if joint_indep_test([u, u, w], n_perm=199, seed=seed).p_value < 0.01:
            hits += 1
    assert hits == 10


def test_joint_test_needs_two_columns():
    with pytest.raises(PreconditionError):
        joint_indep_test([np.arange(30.0)])


def test_ad_detects_mean_shift():
    hits = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        if ad_ksample_test([rng.normal(size=200), rng.normal(1.0, 1.0, 200)], n_perm=199, seed=seed).p_value < 0.01:
            hits += 1
    assert hits == 10


def test_ad_preconditions():
    with pytest.raises(PreconditionError):
        ad_ksample_test([np.arange(10.0)])
    with pytest.raises(PreconditionError):
        ad_ksample_test([np.arange(10.0), np.arange(3.0)])


def test_add_one_rule():
    assert permutation_p_value(5.0, np.zeros(99)) == pytest.approx(0.01)
    assert permutation_p_value(0.0, np.ones(99)) == 1.0
