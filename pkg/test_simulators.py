import numpy as np
import pandas as pd
import pytest
from scipy.integrate import quad
from scipy.stats import anderson_ksamp, ks_2samp, kstest, truncnorm

from cpcm_errors import DomainError, PreconditionError
from data_utils import make_rng
from discovery.graphs import Dag
from simulators.benchmarks import PairKind, sample_exp_robustness, sample_gp_benchmark, sample_linear_env
from simulators.cpcm_sampler import CpcmSpec, NodeSpec, SourceSpec, sample_cpcm
from simulators.datasets import LabeledDataset, sidecar_path
from simulators.theta_expr import ThetaExpression
from simulators.unidentifiable import (backward_pareto_params, gaussian_backward_joint_density,
                                       gaussian_forward_joint_density, gaussian_marginal_density,
                                       pareto_backward_joint_density, pareto_power_theta,
                                       pareto_forward_joint_density, pareto_marginal_density,
                                       sample_gaussian_unidentifiable, sample_pareto_figure2, sample_pareto_power_pair,
                                       sample_pareto_marginal, sample_pareto_unidentifiable)

CHAIN = Dag.from_edges(['x1', 'x2', 'x3'], ['x1->x2', 'x2->x3'])


def chain_spec():
    return CpcmSpec(CHAIN, {
        'x1': NodeSpec(source=SourceSpec('norm', {'loc': 0.0, 'scale': 1.0})),
        'x2': NodeSpec('gaussian_fixed_var', ['2 * x1']),
        'x3': NodeSpec('gaussian', ['x2', '2']),
    })


def test_sample_cpcm_chain_moments():
    dataset = sample_cpcm(chain_spec(), 20000, seed=3)
    assert dataset.names == ['x1', 'x2', 'x3']
    assert np.var(dataset.column('x2')) == pytest.approx(5.0, rel=0.05)
    assert np.var(dataset.column('x3')) == pytest.approx(9.0, rel=0.05)
    assert dataset.sidecar()['ground_truth'] == ['x1->x2', 'x2->x3']


def test_sample_cpcm_is_deterministic():
    first = sample_cpcm(chain_spec(), 50, seed=9)
    second = sample_cpcm(chain_spec(), 50, seed=9)
    assert first.frame.equals(second.frame)
    assert not first.frame.equals(sample_cpcm(chain_spec(), 50, seed=10).frame)


def test_source_spec_uses_scipy_distribution():
    x = SourceSpec('gamma', {'a': 3.0}).sample(20000, make_rng(1))
    assert np.mean(x) == pytest.approx(3.0, rel=0.03)
    with pytest.raises(PreconditionError):
        SourceSpec('not_a_distribution').sample(10, make_rng(1))


def test_cpcm_spec_validation():
    dag = Dag.from_edges(['x1', 'x2'], ['x1->x2'])
    source = NodeSpec(source=SourceSpec('norm'))
    with pytest.raises(PreconditionError):
        CpcmSpec(dag, {'x1': source})
    with pytest.raises(PreconditionError):
        CpcmSpec(dag, {'x1': source, 'x2': NodeSpec('gaussian', ['x1'])})
    with pytest.raises(PreconditionError):
        CpcmSpec(dag, {'x1': source, 'x2': NodeSpec('gaussian_fixed_var', ['x3'])})
    with pytest.raises(PreconditionError):
        CpcmSpec(dag, {'x1': NodeSpec('gaussian_fixed_var', ['1']), 'x2': NodeSpec('gaussian_fixed_var', ['x1'])})


def test_sample_cpcm_reports_node_on_domain_error():
    dag = Dag.from_edges(['x1', 'x2'], ['x1->x2'])
    spec = CpcmSpec(dag, {'x1': NodeSpec(source=SourceSpec('norm')), 'x2': NodeSpec('exponential', ['x1'])})
    with pytest.raises(DomainError, match="x2"):
        sample_cpcm(spec, 100, seed=0)


def test_theta_expression():
    expr = ThetaExpression('log(x1) + 2 * x2 ** 2 - abs(-1)')
    assert expr.variables == {'x1', 'x2'}
    value = expr.evaluate({'x1': np.array([1.0, np.e]), 'x2': np.array([1.0, 0.0])}, 2)
    np.testing.assert_allclose(value, [1.0, 0.0])
    assert ThetaExpression('3').evaluate({}, 4).tolist() == [3.0] * 4
    for bad in ['x1.real', "__import__('os')", 'x1 if x1 else 2', "'a'", 'log', 'max(x1)', 'x1 < 2']:
        with pytest.raises(PreconditionError):
            ThetaExpression(bad)
    with pytest.raises(PreconditionError):
        ThetaExpression('x1 +')
    with pytest.raises(PreconditionError):
        expr.evaluate({'x1': np.ones(2)}, 2)


def test_pareto_power_pair_sample():
    dataset = sample_pareto_power_pair(2.0, 300, seed=1)
    assert dataset.n == 300
    assert np.all(dataset.matrix >= 1.0)
    assert dataset.dag.edges() == ['x1->x2']
    assert dataset.metadata == {'alpha': 2.0}
    assert pareto_power_theta(1.0, -2.0) == pytest.approx(1.0)
    assert pareto_power_theta(np.e, 2.0) == pytest.approx(np.e ** 2 + 1.0)


def test_pareto_figure2_alias_and_unidentifiable_case():
    first = sample_pareto_figure2(0.0, 2000, seed=5)
    pd.testing.assert_frame_equal(first.frame, sample_pareto_power_pair(0.0, 2000, seed=5).frame)
    other = sample_pareto_unidentifiable(1.0, 1.0, 1.0, 2000, seed=6)
    for column in ('x1', 'x2'):
        assert anderson_ksamp([first.column(column), other.column(column)]).pvalue > 0.01


def test_backward_pareto_params_involution():
    assert backward_pareto_params(1.0, 2.0, 3.0) == (1.0, 3.0, 2.0)
    assert backward_pareto_params(*backward_pareto_params(0.5, 1.0, 2.0)) == (0.5, 1.0, 2.0)
    with pytest.raises(PreconditionError):
        backward_pareto_params(0.0, 1.0, 1.0)


@pytest.mark.parametrize('a,b,d', [(1.0, 1.0, 1.0), (1.0, 2.0, 3.0), (0.5, 1.0, 2.0)])
def test_pareto_forward_equals_backward_joint(a, b, d):
    grid = np.linspace(1.0, 5.0, 20)
    x, y = np.meshgrid(grid, grid, indexing='ij')
    forward = pareto_forward_joint_density(x, y, a, b, d)
    backward = pareto_backward_joint_density(x, y, a, b, d)
    np.testing.assert_allclose(forward, backward, rtol=0, atol=1e-8)
    assert quad(lambda t: pareto_marginal_density(t, a, b, d), 1.0, np.inf, limit=500)[0] == pytest.approx(1.0, abs=1e-6)


def test_pareto_marginal_sampler_matches_density():
    a, b, d = 1.0, 2.0, 3.0
    x = sample_pareto_marginal(a, b, d, 2000, make_rng(4))

    def cdf(t):
        return np.array([quad(lambda s: pareto_marginal_density(s, a, b, d), 1.0, v)[0] for v in np.atleast_1d(t)])

    assert np.all(x >= 1.0)
    assert kstest(x, cdf).pvalue > 0.001


def test_pareto_unidentifiable_metadata():
    dataset = sample_pareto_unidentifiable(1.0, 2.0, 3.0, 100, seed=2)
    assert dataset.metadata['backward'] == {'alpha': 1.0, 'beta': 3.0, 'delta': 2.0}
    assert np.all(dataset.matrix >= 1.0)


@pytest.mark.parametrize('constants', [(1, 1, 1, 1, 1, 1), (0.5, 2.0, 1.0, -0.5, 0.3, 1.2)])
def test_gaussian_forward_equals_backward_joint(constants):
    grid = np.linspace(-2.0, 3.0, 20)
    x, y = np.meshgrid(grid, grid, indexing='ij')
    forward = gaussian_forward_joint_density(x, y, *constants)
    backward = gaussian_backward_joint_density(x, y, *constants)
    np.testing.assert_allclose(forward, backward, rtol=1e-7, atol=1e-12)
    assert quad(lambda t: gaussian_marginal_density(t, *constants), -np.inf, np.inf)[0] == pytest.approx(1.0, abs=1e-7)


def test_gaussian_constants_validated():
    with pytest.raises(PreconditionError):
        sample_gaussian_unidentifiable(0, 1, 1, 2, 0, 1, 100, seed=0)
    with pytest.raises(PreconditionError):
        sample_gaussian_unidentifiable(1, -1, 1, 1, 1, 1, 100, seed=0)


def test_gaussian_unidentifiable_sample_is_swap_symmetric():
    not_rejected = 0
    for seed in range(5):
        dataset = sample_gaussian_unidentifiable(1, 1, 1, 1, 1, 1, 5000, seed=seed)
        x, y = dataset.column('x1'), dataset.column('x2')
        not_rejected += ks_2samp(x - y, y - x).pvalue >= 0.01 and ks_2samp(x, y).pvalue >= 0.01
    assert not_rejected >= 4


def test_gp_benchmark_kinds():
    for kind in PairKind:
        dataset = sample_gp_benchmark(kind, 200, seed=5)
        assert dataset.scenario == f'gp-{kind.value}'
        assert np.all(np.isfinite(dataset.matrix))
        assert dataset.dag.edges() == ['x1->x2']
    assert sample_gp_benchmark('LSg', 200, 5).frame.equals(sample_gp_benchmark('LSg', 200, 5).frame)
    with pytest.raises(PreconditionError):
        sample_gp_benchmark('LSg', 50, 5)
    with pytest.raises(ValueError):
        sample_gp_benchmark('XYZ', 200, 5)


def test_exp_robustness_cause_distribution():
    dataset = sample_exp_robustness('linear', 20000, seed=7)
    x1 = dataset.column('x1')
    assert np.all(x1 > 0)
    assert np.mean(x1) == pytest.approx(truncnorm(a=-2.0, b=np.inf, loc=2.0).mean(), abs=0.03)
    assert np.mean(dataset.column('x2') * x1) == pytest.approx(1.0, rel=0.05)
    for kind in ('quadratic', 'exp_half', 'gp_random'):
        assert np.all(sample_exp_robustness(kind, 200, seed=7).column('x2') > 0)


def test_linear_env_dataset():
    dataset = sample_linear_env(400, seed=2, coefficients=[1.5, 0.0], shift=[2.0, 0.0])
    assert dataset.names == ['x1', 'x2', 'y']
    assert dataset.dag.edges() == ['x1->y']
    env = dataset.env
    assert sorted(set(env.tolist())) == [0, 1]
    x1 = dataset.column('x1')
    assert np.mean(x1[env == 1]) - np.mean(x1[env == 0]) == pytest.approx(2.0, abs=0.3)
    with pytest.raises(PreconditionError):
        sample_linear_env(10, 0, [1.0, 1.0], shift=[1.0])


def test_labeled_dataset_csv_round_trip(tmp_path):
    dataset = sample_linear_env(50, seed=1, coefficients=[1.0, 0.5])
    path = str(tmp_path / 'env.csv')
    dataset.to_csv(path)
    assert sidecar_path(path) == str(tmp_path / 'env.json')
    loaded = LabeledDataset.from_csv(path)
    assert np.array_equal(loaded.matrix, dataset.matrix)
    assert np.array_equal(loaded.env, dataset.env)
    assert loaded.dag == dataset.dag
    assert loaded.seed == 1
    assert loaded.scenario == 'linear-env'
