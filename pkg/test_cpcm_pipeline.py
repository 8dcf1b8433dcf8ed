import json
import os

import numpy as np
import pandas as pd
import pytest

import cpcm_pipeline
from benchmark_runner import ROBUSTNESS_FAMILIES
from cpcm_errors import PreconditionError
from cpcm_pipeline import CpcmPipeline, RunConfig, build_parser, load_numeric_columns


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv('LOG_DIR', str(tmp_path / 'logs'))
    monkeypatch.setenv('REPORT_DIR', str(tmp_path / 'reports'))
    monkeypatch.setenv('N_PERM_DISCOVERY', '99')
    monkeypatch.setenv('CPCM_THREADS', '2')
    return tmp_path


def run_cli(argv):
    args = build_parser().parse_args(argv)
    return CpcmPipeline(profile=args.profile).run(RunConfig.from_args(args))


def read_json(path):
    with open(path, encoding='utf-8') as f:
        return json.load(f)


def test_simulate_writes_csv_sidecar_and_report(workspace):
    out = str(workspace / 'd.csv')
    assert run_cli(['simulate', '--scenario', 'pareto-fig2', '--alpha-param', '2', '--n', '300',
                    '--seed', '1', '--out', out]) == 0
    frame = pd.read_csv(out)
    assert len(frame) == 300
    assert read_json(str(workspace / 'd.json'))['ground_truth'] == ['x1->x2']
    report = read_json(str(workspace / 'd.report.json'))
    assert report['schema'] == 'cpcm-report/1'
    assert report['command'] == 'simulate'


def test_simulate_requires_seed(workspace):
    with pytest.raises(PreconditionError):
        RunConfig(command='simulate', scenario='pareto-fig2')
    with pytest.raises(SystemExit) as exit_info:
        cpcm_pipeline.main(['simulate', '--scenario', 'pareto-fig2', '--n', '100'])
    assert exit_info.value.code == 2


def test_discover_report_is_reproducible(workspace):
    data = str(workspace / 'd.csv')
    run_cli(['simulate', '--scenario', 'gp-benchmark', '--kind', 'LSg', '--n', '200', '--seed', '2', '--out', data])
    reports = []
    for name in ('first.json', 'second.json'):
        out = str(workspace / name)
        assert run_cli(['discover', '--input', data, '--x1', 'x1', '--x2', 'x2', '--family1', 'gaussian',
                        '--seed', '7', '--out', out]) == 0
        with open(out, encoding='utf-8') as f:
            reports.append(f.read())
    assert reports[0] == reports[1]
    payload = json.loads(reports[0])
    assert payload['verdict'] in ('forward', 'backward', 'empty', 'both_plausible', 'none_plausible')
    assert payload['input']['rows'] == 200
    assert os.path.exists(str(workspace / 'first.run.json'))
    if payload['verdict'] != 'empty':
        assert len([d['p_residual'] for d in payload['directions']]) == 2


def test_discover_dump_model(workspace):
    data = str(workspace / 'd.csv')
    run_cli(['simulate', '--scenario', 'exp-robustness', '--kind', 'linear', '--n', '200', '--seed', '3',
             '--out', data])
    models = str(workspace / 'models.json')
    assert run_cli(['discover', '--input', data, '--x1', 'x1', '--x2', 'x2', '--family1', 'gamma_fixed_scale',
                    '--seed', '1', '--out', str(workspace / 'r.json'), '--dump-model', models]) == 0
    report = read_json(str(workspace / 'r.json'))
    if report['verdict'] != 'empty':
        dumped = read_json(models)['models']
        assert set(dumped) == {'x1->x2', 'x2->x1'}
        assert dumped['x1->x2']['family'] == 'gamma_fixed_scale'


def test_unknown_family_exits_with_2(workspace):
    data = str(workspace / 'd.csv')
    pd.DataFrame({'a': np.arange(60.0), 'b': np.arange(60.0) ** 2}).to_csv(data, index=False)
    code = run_cli(['discover', '--input', data, '--x1', 'a', '--x2', 'b', '--family1', 'weibull',
                    '--out', str(workspace / 'r.json')])
    assert code == 2
    with open(str(workspace / 'logs' / 'default' / 'cpcm_pipeline.log'), encoding='utf-8') as f:
        assert 'Valid ids' in f.read()


def test_load_numeric_columns_drops_missing_rows(workspace):
    path = str(workspace / 'm.csv')
    pd.DataFrame({'a': [1.0, np.nan, 3.0], 'b': [1.0, 2.0, 3.0], 'c': ['x', 'y', 'z']}).to_csv(path, index=False)
    frame, dropped = load_numeric_columns(path, ['a', 'b'])
    assert dropped == 1
    assert frame['a'].tolist() == [1.0, 3.0]
    with pytest.raises(PreconditionError):
        load_numeric_columns(path, ['c'])
    with pytest.raises(PreconditionError):
        load_numeric_columns(path, ['missing'])
    with pytest.raises(PreconditionError):
        load_numeric_columns(str(workspace / 'nope.csv'), ['a'])


def test_missing_rows_reported_in_discover(workspace):
    rng = np.random.default_rng(0)
    x = rng.normal(size=120)
    frame = pd.DataFrame({'x': x, 'y': x ** 3 + rng.normal(size=120)})
    frame.loc[5, 'y'] = np.nan
    data = str(workspace / 'd.csv')
    frame.to_csv(data, index=False)
    out = str(workspace / 'r.json')
    assert run_cli(['discover', '--input', data, '--x1', 'x', '--x2', 'y', '--family1', 'gaussian',
                    '--seed', '1', '--out', out]) == 0
    assert read_json(out)['input'] == {'path': 'd.csv', 'rows': 119, 'dropped_rows': 1}


def test_non_numeric_column_exits_with_2(workspace):
    data = str(workspace / 'd.csv')
    pd.DataFrame({'a': ['u'] * 60, 'b': np.arange(60.0)}).to_csv(data, index=False)
    assert run_cli(['discover', '--input', data, '--x1', 'a', '--x2', 'b', '--family1', 'gaussian',
                    '--out', str(workspace / 'r.json')]) == 2


def test_search_and_icp_commands(workspace):
    data = str(workspace / 'env.csv')
    assert run_cli(['simulate', '--scenario', 'linear-env', '--coefficients', '1.5,0', '--shift', '2,0',
                    '--n', '150', '--seed', '4', '--out', data]) == 0
    out = str(workspace / 'icp.json')
    assert run_cli(['icp', '--input', data, '--target', 'y', '--family1', 'gaussian_fixed_var',
                    '--n-perm', '99', '--seed', '4', '--out', out]) == 0
    report = read_json(out)
    assert len(report['subsets']) == 4
    assert set(report['estimate']) <= {'x1', 'x2'}

    out = str(workspace / 'search.json')
    assert run_cli(['search', '--input', data, '--columns', 'x1,y', '--families', 'gaussian',
                    '--seed', '1', '--out', out]) == 0
    report = read_json(out)
    assert len(report['score_table']) == 3
    assert report['verdict'] == 'scored_choice'


def test_benchmark_pareto_suite(workspace):
    out = str(workspace / 'bench.json')
    assert run_cli(['benchmark', '--suite', 'pareto', '--pairs', '2', '--n', '100', '--seed', '3',
                    '--out', out]) == 0
    table = read_json(out)['table']
    assert set(table) == {'-2', '0', '2'}
    assert sum(table['2']['verdicts'].values()) == 2


def test_unknown_suite_exits_with_2(workspace):
    assert run_cli(['benchmark', '--suite', 'nope', '--seed', '1', '--out', str(workspace / 'b.json')]) == 2


def test_benchmark_robustness_suite_shifts_pareto_data(workspace):
    out = str(workspace / 'robust.json')
    assert run_cli(['benchmark', '--suite', 'robustness', '--families', 'pareto,gaussian_fixed_var',
                    '--pairs', '2', '--n', '100', '--seed', '4', '--out', out]) == 0
    table = read_json(out)['table']
    assert set(table) == {'pareto', 'gaussian_fixed_var'}
    assert set(table['pareto']) == {'linear', 'quadratic', 'exp_half', 'gp_random'}
    assert table['pareto']['linear']['n_runs'] == 2
    assert 'gamma' in ROBUSTNESS_FAMILIES


def test_malformed_coefficients_exit_with_2(workspace):
    with pytest.raises(SystemExit) as exit_info:
        cpcm_pipeline.main(['simulate', '--scenario', 'linear-env', '--coefficients', '1.5,abc', '--seed', '1',
                            '--out', str(workspace / 'env.csv')])
    assert exit_info.value.code == 2
    args = build_parser().parse_args(['simulate', '--scenario', 'linear-env', '--coefficients', ' 1.5 , 0 ,',
                                      '--seed', '1'])
    assert RunConfig.from_args(args).coefficients == [1.5, 0.0]
