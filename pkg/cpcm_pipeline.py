#!/usr/bin/env python3

import argparse
import logging
import os
import sys
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import pandas as pd

from benchmark_runner import RATE_KINDS, ROBUSTNESS_FAMILIES, BenchmarkRunner
from config import Config
from cpcm_errors import CpcmError, PreconditionError, exit_code_for
from data_utils import clean_string, safe_float
from discovery.bivariate import bivariate_discover
from discovery.score_config import ScoreConfig
from discovery.score_search import score_search
from distributions.expfam import get_family
from invariance import EnvDataset, icp_scan
from report_writer import write_json, write_report
from simulators.benchmarks import sample_exp_robustness, sample_gp_benchmark, sample_linear_env
from simulators.unidentifiable import (sample_gaussian_unidentifiable, sample_pareto_power_pair,
                                       sample_pareto_unidentifiable)

COMMANDS = ('discover', 'search', 'simulate', 'benchmark', 'icp')
SCENARIOS = ('pareto-fig2', 'pareto-unidentifiable', 'gaussian-unidentifiable', 'gp-benchmark',
             'exp-robustness', 'linear-env')
SUITES = ('gaussian', 'robustness', 'pareto')


def _split(value: Optional[str]) -> List[str]:
    return [item for item in (clean_string(v) for v in (value or '').split(',')) if item]


def _floats(value: Optional[str], flag: str) -> List[float]:
    numbers = [safe_float(v) for v in _split(value)]
    if any(v is None for v in numbers):
        raise PreconditionError(f"--{flag} expects comma-separated numbers, got {value!r}")
    return numbers


@dataclass
class RunConfig:
    """One CLI invocation; seed is mandatory for simulate and benchmark"""

    command: str
    profile: str = 'default'
    input: Optional[str] = None
    out: Optional[str] = None
    x1: Optional[str] = None
    x2: Optional[str] = None
    family1: Optional[str] = None
    family2: Optional[str] = None
    columns: List[str] = field(default_factory=list)
    families: List[str] = field(default_factory=list)
    target: Optional[str] = None
    env_column: str = 'env'
    alpha: Optional[float] = None
    lam: Optional[float] = None
    seed: Optional[int] = None
    n_perm: Optional[int] = None
    scenario: Optional[str] = None
    kind: Optional[str] = None
    alpha_param: float = 2.0
    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    d: float = 1.0
    e: float = 1.0
    beta_param: float = 1.0
    coefficients: List[float] = field(default_factory=lambda: [1.0, 0.0])
    shift: List[float] = field(default_factory=list)
    n: int = 300
    suite: Optional[str] = None
    pairs: int = 20
    dump_model: Optional[str] = None

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise PreconditionError(f"Unknown command '{self.command}'. Valid commands: {', '.join(COMMANDS)}")
        if self.command in ('simulate', 'benchmark') and self.seed is None:
            raise PreconditionError(f"{self.command} requires --seed")
        if self.command in ('discover', 'search', 'icp') and not self.input:
            raise PreconditionError(f"{self.command} requires --input")
        if self.n < 1 or self.pairs < 1:
            raise PreconditionError("--n and --pairs must be positive")

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> 'RunConfig':
        return cls(
            command=args.command, profile=args.profile, input=args.input, out=args.out,
            x1=args.x1, x2=args.x2, family1=args.family1, family2=args.family2,
            columns=_split(args.columns), families=_split(args.families), target=args.target,
            env_column=args.env_column, alpha=args.alpha, lam=args.lam, seed=args.seed, n_perm=args.n_perm,
            scenario=args.scenario, kind=args.kind, alpha_param=args.alpha_param,
            a=args.a, b=args.b, c=args.c, d=args.d, e=args.e, beta_param=args.beta_param,
            coefficients=_floats(args.coefficients, 'coefficients') or [1.0, 0.0],
            shift=_floats(args.shift, 'shift'),
            n=args.n, suite=args.suite, pairs=args.pairs, dump_model=args.dump_model,
        )

    def to_dict(self) -> dict:
        """Echo of the settings, without output locations"""
        out = {k: v for k, v in vars(self).items()
               if v is not None and k not in ('profile', 'out', 'dump_model')}
        if self.input:
            out['input'] = os.path.basename(self.input)
        return out


def load_numeric_columns(path: str, columns: List[str]) -> Tuple[pd.DataFrame, int]:
    """Read a header CSV, keep the requested numeric columns and drop incomplete rows"""
    if not os.path.exists(path):
        raise PreconditionError(f"Input file not found: {path}")
    frame = pd.read_csv(path, encoding='utf-8')
    columns = columns or list(frame.columns)
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise PreconditionError(f"Columns not found in {path}: {missing}. Available: {list(frame.columns)}")
    selected = frame[columns]
    for name in columns:
        if not pd.api.types.is_numeric_dtype(selected[name]):
            raise PreconditionError(f"Column '{name}' is not numeric")
    complete = selected.dropna()
    dropped = len(selected) - len(complete)
    if dropped:
        logging.warning(f"Dropped {dropped} rows with missing values from {path}")
    return complete.reset_index(drop=True), dropped


class CpcmPipeline:
    """Entry point tying data ingestion, discovery, simulation and reporting together"""

    def __init__(self, profile: str = 'default'):
        self.profile = profile
        self.config = Config(profile=profile)

        log_dir = os.path.join(self.config.LOG_DIR, profile)
        os.makedirs(log_dir, exist_ok=True)
        log_level = self.config.LOG_LEVEL
        logging.basicConfig(
            level=getattr(logging, log_level),
            format='%(asctime)s - %(levelname)s - %(message)s',
            handlers=[
                logging.FileHandler(os.path.join(log_dir, 'cpcm_pipeline.log')),
                logging.StreamHandler(sys.stdout)
            ],
            force=True
        )
        logging.getLogger().setLevel(getattr(logging, log_level))
        logging.info(f"CPCM pipeline initialized for profile: {profile}")

    def score_config(self, run: RunConfig, **overrides) -> ScoreConfig:
        values = dict(alpha=run.alpha, lam=run.lam, seed=run.seed, n_perm=run.n_perm)
        values.update(overrides)
        return ScoreConfig.from_config(self.config, **values)

    def report_path(self, run: RunConfig) -> str:
        return run.out or os.path.join(self.config.REPORT_DIR, f"{run.command}_report.json")

    def run_discover(self, run: RunConfig) -> dict:
        if not run.x1 or not run.x2 or not run.family1:
            raise PreconditionError("discover requires --x1, --x2 and --family1")
        f1 = get_family(run.family1)
        f2 = get_family(run.family2) if run.family2 else f1
        frame, dropped = load_numeric_columns(run.input, [run.x1, run.x2])
        logging.info(f"Discovering between {run.x1} and {run.x2} on {len(frame)} rows")
        report = bivariate_discover(frame[run.x1].to_numpy(), frame[run.x2].to_numpy(), f1, f2,
                                    config=self.score_config(run), names=(run.x1, run.x2))
        if run.dump_model:
            models = {d.label: d.model.to_dict() for d in report.directions if d.model is not None}
            write_json(run.dump_model, {'models': models})
            logging.info(f"Fitted models written to {run.dump_model}")
        return {'input': {'path': os.path.basename(run.input), 'rows': len(frame), 'dropped_rows': dropped},
                **report.to_dict()}

    def run_search(self, run: RunConfig) -> dict:
        frame, dropped = load_numeric_columns(run.input, run.columns)
        families = run.families or ([run.family1] if run.family1 else [])
        if not families:
            raise PreconditionError("search requires --families (one id, or one per column)")
        fams = [get_family(f) for f in families]
        if len(fams) == 1:
            fams = fams * frame.shape[1]
        report = score_search(frame, fams, config=self.score_config(run), names=list(frame.columns))
        return {'input': {'path': os.path.basename(run.input), 'rows': len(frame), 'dropped_rows': dropped},
                **report.to_dict()}

    def run_simulate(self, run: RunConfig) -> dict:
        scenario = run.scenario
        if scenario == 'pareto-fig2':
            dataset = sample_pareto_power_pair(run.alpha_param, run.n, run.seed)
        elif scenario == 'pareto-unidentifiable':
            dataset = sample_pareto_unidentifiable(run.a, run.b, run.d, run.n, run.seed)
        elif scenario == 'gaussian-unidentifiable':
            dataset = sample_gaussian_unidentifiable(run.a, run.c, run.d, run.e, run.alpha_param, run.beta_param,
                                                     run.n, run.seed)
        elif scenario == 'gp-benchmark':
            dataset = sample_gp_benchmark(run.kind or 'LSg', run.n, run.seed)
        elif scenario == 'exp-robustness':
            dataset = sample_exp_robustness(run.kind or 'linear', run.n, run.seed)
        elif scenario == 'linear-env':
            dataset = sample_linear_env(run.n, run.seed, run.coefficients, shift=run.shift)
        else:
            raise PreconditionError(f"Unknown scenario '{scenario}'. Valid scenarios: {', '.join(SCENARIOS)}")
        csv_path = run.out or os.path.join(self.config.REPORT_DIR, f"{scenario}.csv")
        dataset.to_csv(csv_path)
        return {'output': os.path.basename(csv_path), **dataset.sidecar()}

    def run_benchmark(self, run: RunConfig) -> dict:
        runner = BenchmarkRunner(self.score_config(run))
        if run.suite == 'gaussian':
            table = runner.run_gaussian_suite(run.pairs, run.n, run.seed)
        elif run.suite == 'robustness':
            kinds = [run.kind] if run.kind else RATE_KINDS
            table = runner.run_robustness_suite(run.pairs, run.n, run.seed, kinds=kinds,
                                                families=run.families or ROBUSTNESS_FAMILIES)
        elif run.suite == 'pareto':
            table = runner.run_pareto_suite(run.pairs, run.n, run.seed)
        else:
            raise PreconditionError(f"Unknown suite '{run.suite}'. Valid suites: {', '.join(SUITES)}")
        return {'suite': run.suite, 'pairs': run.pairs, 'n': run.n, 'seed': run.seed, 'table': table}

    def run_icp(self, run: RunConfig) -> dict:
        if not run.target:
            raise PreconditionError("icp requires --target")
        family = get_family(run.family1 or 'gaussian')
        covariates = run.columns
        if not covariates and os.path.exists(run.input):
            header = pd.read_csv(run.input, encoding='utf-8', nrows=0).columns
            covariates = [c for c in header if c not in (run.target, run.env_column)]
        data_frame, dropped = load_numeric_columns(run.input, covariates + [run.target, run.env_column])
        data = EnvDataset.from_frame(data_frame, run.target, covariates, env_column=run.env_column)
        score_config = self.score_config(run, n_perm=run.n_perm or self.config.N_PERM_ACCEPTANCE)
        scan = icp_scan(data, family, alpha=score_config.alpha, n_perm=score_config.n_perm,
                        seed=score_config.seed, max_workers=score_config.max_workers,
                        fit_options=score_config.fit_options())
        return {'input': {'path': os.path.basename(run.input), 'rows': len(data_frame), 'dropped_rows': dropped},
                'target': run.target, 'family': family.id, **scan.to_dict()}

    def run(self, run: RunConfig) -> int:
        """Execute one command and write its report; returns the process exit status"""
        handlers = {
            'discover': self.run_discover,
            'search': self.run_search,
            'simulate': self.run_simulate,
            'benchmark': self.run_benchmark,
            'icp': self.run_icp,
        }
        logging.info(f"Running {run.command}...")
        try:
            body = handlers[run.command](run)
            body['run_config'] = run.to_dict()
            path = self.report_path(run)
            if run.command == 'simulate':
                stem, _ = os.path.splitext(path)
                path = f"{stem}.report.json"
            write_report(path, run.command, body, run_info={'profile': self.profile})
            logging.info(f"{run.command} completed successfully")
            return 0
        except CpcmError as e:
            logging.error(f"{run.command} failed: {e}")
            return exit_code_for(e)
        except Exception as e:
            logging.exception(f"{run.command} failed with an unexpected error: {e}")
            return 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description='CPCM causal discovery toolkit')
    parser.add_argument('command', choices=COMMANDS, help='Operation to run')
    parser.add_argument('--profile', default='default', help='Configuration profile (.env.<profile>)')
    parser.add_argument('--input', help='Input CSV with a header row')
    parser.add_argument('--out', help='Output path (report JSON, or CSV for simulate)')
    parser.add_argument('--x1', help='First column for discover')
    parser.add_argument('--x2', help='Second column for discover')
    parser.add_argument('--family1', help='Family id for x1 (used for the x2->x1 direction)')
    parser.add_argument('--family2', help='Family id for x2; defaults to --family1')
    parser.add_argument('--columns', help='Comma-separated columns (search) or covariates (icp)')
    parser.add_argument('--families', help='Comma-separated family ids')
    parser.add_argument('--target', help='Target column for icp')
    parser.add_argument('--env-column', default='env', help='Environment label column for icp')
    parser.add_argument('--alpha', type=float, help='Test level')
    parser.add_argument('--lambda', dest='lam', type=float, help='Edge penalty for search')
    parser.add_argument('--seed', type=int, help='Seed for all randomness')
    parser.add_argument('--n-perm', type=int, help='Permutations per test')
    parser.add_argument('--scenario', help=f"Simulation scenario: {', '.join(SCENARIOS)}")
    parser.add_argument('--kind', help='Pair kind (gp-benchmark) or rate kind (exp-robustness)')
    parser.add_argument('--alpha-param', type=float, default=2.0, help='Scenario alpha constant')
    parser.add_argument('--beta-param', type=float, default=1.0, help='Scenario beta constant')
    for name in ('a', 'b', 'c', 'd', 'e'):
        parser.add_argument(f'--{name}', type=float, default=1.0, help=f'Scenario constant {name}')
    parser.add_argument('--coefficients', help='Comma-separated coefficients for linear-env')
    parser.add_argument('--shift', help='Comma-separated covariate mean shifts for linear-env')
    parser.add_argument('--n', type=int, default=300, help='Sample size (per environment for linear-env)')
    parser.add_argument('--suite', help=f"Benchmark suite: {', '.join(SUITES)}")
    parser.add_argument('--pairs', type=int, default=20, help='Pairs or repetitions per benchmark cell')
    parser.add_argument('--dump-model', help='Write fitted discover models as JSON to this path')
    return parser


def main(argv: Optional[List[str]] = None):
    args = build_parser().parse_args(argv)
    pipeline = CpcmPipeline(profile=args.profile)
    try:
        run_config = RunConfig.from_args(args)
    except CpcmError as e:
        logging.error(f"Invalid arguments: {e}")
        sys.exit(exit_code_for(e))
    sys.exit(pipeline.run(run_config))


if __name__ == "__main__":
    main()
