import logging
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Dict, List, Sequence

from data_utils import derive_seed
from discovery.bivariate import bivariate_discover
from discovery.reports import DiscoveryReport, Verdict
from discovery.score_config import ScoreConfig
from distributions.expfam import get_family
from simulators.benchmarks import PairKind, RateKind, sample_exp_robustness, sample_gp_benchmark
from simulators.unidentifiable import sample_pareto_power_pair

ROBUSTNESS_FAMILIES = ('gamma_fixed_scale', 'gamma', 'pareto', 'gaussian_fixed_var', 'gaussian')
RATE_KINDS = tuple(k.value for k in RateKind)


def forced_correct(report: DiscoveryReport) -> bool:
    """Forced decision: forward/backward count directly, both/none go through the scored choice"""
    return report.forced_direction() == 'forward'


class BenchmarkRunner:
    """Runs the simulation suites pair by pair on a thread pool"""

    def __init__(self, config: ScoreConfig):
        self.config = config
        self.inner = replace(config, max_workers=1)

    def _map(self, fn, items: List) -> List:
        with ThreadPoolExecutor(max_workers=self.config.max_workers) as executor:
            return list(executor.map(fn, items))

    def _discover(self, dataset, family, label: str, index: int, shift: float = 0.0) -> DiscoveryReport:
        config = replace(self.inner, seed=derive_seed(self.config.seed, 'discover', label, index))
        x1 = dataset.column('x1') + shift
        x2 = dataset.column('x2') + shift
        return bivariate_discover(x1, x2, family, config=config)

    @staticmethod
    def _summarise(reports: List[DiscoveryReport]) -> dict:
        verdicts = Counter(r.verdict.value for r in reports)
        correct = sum(forced_correct(r) for r in reports)
        return {
            'n_runs': len(reports),
            'accuracy': correct / len(reports) if reports else 0.0,
            'verdicts': {v.value: verdicts.get(v.value, 0) for v in Verdict if v is not Verdict.SCORED_CHOICE},
        }

    def run_gaussian_suite(self, pairs: int, n: int, seed: int,
                           kinds: Sequence[str] = tuple(k.value for k in PairKind)) -> Dict[str, dict]:
        """Accuracy of CPCM with the two-parameter Gaussian family per pair kind"""
        table = {}
        for kind in kinds:
            kind = PairKind(kind).value

            def run(i, kind=kind):
                dataset = sample_gp_benchmark(kind, n, derive_seed(seed, 'pair', kind, i))
                return self._discover(dataset, 'gaussian', kind, i)

            table[kind] = self._summarise(self._map(run, list(range(pairs))))
            logging.info(f"Gaussian suite {kind}: accuracy {table[kind]['accuracy']:.2f} over {pairs} pairs")
        return table

    def run_robustness_suite(self, reps: int, n: int, seed: int, kinds: Sequence[str] = RATE_KINDS,
                             families: Sequence[str] = ROBUSTNESS_FAMILIES) -> Dict[str, Dict[str, dict]]:
        """Exponential data analysed under several (possibly wrong) families"""
        table: Dict[str, Dict[str, dict]] = {}
        for family_id in families:
            family = get_family(family_id)
            # Pareto lives on [1, inf): shift both variables into its support
            shift = 1.0 if family.support.lower >= 1.0 else 0.0
            table[family.id] = {}
            for kind in kinds:
                kind = RateKind(kind).value

                def run(i, kind=kind, family=family, shift=shift):
                    dataset = sample_exp_robustness(kind, n, derive_seed(seed, 'rep', kind, i))
                    return self._discover(dataset, family, f"{family.id}:{kind}", i, shift=shift)

                table[family.id][kind] = self._summarise(self._map(run, list(range(reps))))
                logging.info(f"Robustness {family.id}/{kind}: accuracy {table[family.id][kind]['accuracy']:.2f}")
        return table

    def run_pareto_suite(self, reps: int, n: int, seed: int,
                         alphas: Sequence[float] = (-2.0, 0.0, 2.0)) -> Dict[str, dict]:
        """Verdict rates on the Pareto scenario theta(x) = x^alpha log x + 1"""
        table = {}
        for alpha in alphas:
            label = f"{float(alpha):g}"

            def run(i, alpha=alpha, label=label):
                dataset = sample_pareto_power_pair(alpha, n, derive_seed(seed, 'alpha', label, i))
                return self._discover(dataset, 'pareto', label, i)

            summary = self._summarise(self._map(run, list(range(reps))))
            summary['rates'] = {k: v / reps for k, v in summary['verdicts'].items()}
            table[label] = summary
            logging.info(f"Pareto suite alpha={label}: {summary['rates']}")
        return table
