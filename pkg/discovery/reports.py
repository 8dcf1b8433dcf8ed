from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from discovery.graphs import Dag
from estimators.smooth_mle import FitDiagnostics, ThetaModel
from independence.results import TestResult

TIE_RULE = 'lowest total, then fewer edges, then enumeration order'


class Verdict(str, Enum):
    """Outcome of a discovery run.

    SCORED_CHOICE is only produced by the DAG score search. Bivariate runs that
    end in BOTH_PLAUSIBLE or NONE_PLAUSIBLE keep that verdict and carry the
    preferred direction in ``DiscoveryReport.scored_choice`` instead.
    """

    FORWARD = 'forward'
    BACKWARD = 'backward'
    EMPTY = 'empty'
    BOTH_PLAUSIBLE = 'both_plausible'
    NONE_PLAUSIBLE = 'none_plausible'
    SCORED_CHOICE = 'scored_choice'


@dataclass
class DirectionVerdict:
    cause: str
    effect: str
    p_dependence: float
    p_residual: float
    plausible: bool
    model: Optional[ThetaModel] = None
    diagnostics: Optional[FitDiagnostics] = None
    residual_test: Optional[TestResult] = None
    reason: Optional[str] = None

    @property
    def direction(self) -> Tuple[str, str]:
        return self.cause, self.effect

    @property
    def label(self) -> str:
        return f"{self.cause}->{self.effect}"

    def to_dict(self) -> dict:
        return {
            'direction': self.label,
            'p_dependence': self.p_dependence,
            'p_residual': self.p_residual,
            'plausible': self.plausible,
            'reason': self.reason,
            'residual_test': self.residual_test.to_dict() if self.residual_test else None,
            'fit': self.diagnostics.to_dict() if self.diagnostics else None,
        }


@dataclass
class ScoreEntry:
    index: int
    dag: Dag
    rho: float
    penalty: float
    p_value: float
    unconverged_nodes: List[str] = field(default_factory=list)
    support_mismatch: List[str] = field(default_factory=list)

    @property
    def total(self) -> float:
        return self.rho + self.penalty

    def sort_key(self):
        return self.total, self.dag.n_edges, self.index

    def to_dict(self) -> dict:
        return {
            'index': self.index,
            'edges': self.dag.edges(),
            'rho': self.rho,
            'penalty': self.penalty,
            'total': self.total,
            'p_value': self.p_value,
            'unconverged_nodes': list(self.unconverged_nodes),
            'support_mismatch': list(self.support_mismatch),
        }


@dataclass
class DiscoveryReport:
    verdict: Verdict
    alpha: float
    families: Dict[str, str]
    directions: List[DirectionVerdict] = field(default_factory=list)
    dependence_test: Optional[TestResult] = None
    scored_choice: Optional[str] = None
    score_table: Optional[List[ScoreEntry]] = None
    selected_dag: Optional[Dag] = None
    config: Dict = field(default_factory=dict)

    def direction(self, label: str) -> Optional[DirectionVerdict]:
        return next((d for d in self.directions if d.label == label), None)

    def forced_direction(self) -> Optional[str]:
        """forward/backward verdicts as-is, both/none resolved by the scored choice"""
        if self.verdict in (Verdict.FORWARD, Verdict.BACKWARD):
            return self.verdict.value
        if self.scored_choice is None or len(self.directions) != 2:
            return None
        return 'forward' if self.scored_choice == self.directions[0].label else 'backward'

    def to_dict(self) -> dict:
        out = {
            'verdict': self.verdict.value,
            'scored_choice': self.scored_choice,
            'alpha': self.alpha,
            'families': dict(self.families),
            'dependence_test': self.dependence_test.to_dict() if self.dependence_test else None,
            'directions': [d.to_dict() for d in self.directions],
            'config': dict(self.config),
        }
        if self.selected_dag is not None:
            out['selected_graph'] = self.selected_dag.edges()
        if self.score_table is not None:
            out['tie_rule'] = TIE_RULE
            out['score_table'] = [entry.to_dict() for entry in self.score_table]
        return out
