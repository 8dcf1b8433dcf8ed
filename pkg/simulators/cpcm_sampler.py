import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import stats

from cpcm_errors import DomainError, PreconditionError
from data_utils import make_rng
from discovery.graphs import Dag, parents
from distributions.expfam import get_family
from simulators.datasets import LabeledDataset
from simulators.theta_expr import ThetaExpression


@dataclass
class SourceSpec:
    """Marginal of a parentless node: any scipy.stats distribution by name"""

    distribution: str
    params: Dict[str, float] = field(default_factory=dict)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        law = getattr(stats, self.distribution, None)
        if law is None or not hasattr(law, 'rvs'):
            raise PreconditionError(f"Unknown source distribution '{self.distribution}'")
        return np.asarray(law(**self.params).rvs(size=n, random_state=rng), dtype=float)

    def to_dict(self) -> dict:
        return {'distribution': self.distribution, 'params': dict(self.params)}


@dataclass
class NodeSpec:
    """Either a source marginal or a family with one expression per parameter"""

    family: Optional[str] = None
    theta: Sequence[str] = ()
    source: Optional[SourceSpec] = None

    def expressions(self) -> List[ThetaExpression]:
        return [ThetaExpression(t) for t in self.theta]

    def to_dict(self) -> dict:
        if self.source is not None:
            return {'source': self.source.to_dict()}
        return {'family': self.family, 'theta': list(self.theta)}


@dataclass
class CpcmSpec:
    dag: Dag
    nodes: Dict[str, NodeSpec]

    def __post_init__(self):
        for j, name in enumerate(self.dag.names):
            if name not in self.nodes:
                raise PreconditionError(f"No specification for node '{name}'")
            node = self.nodes[name]
            parent_names = {self.dag.names[i] for i in parents(self.dag, j)}
            if not parent_names:
                if node.source is None:
                    raise PreconditionError(f"Source node '{name}' needs a marginal sampler")
                continue
            family = get_family(node.family)
            if len(node.theta) != family.q:
                raise PreconditionError(f"Node '{name}': {family.id} needs {family.q} parameter expression(s)")
            for expr in node.expressions():
                stray = expr.variables - parent_names
                if stray:
                    raise PreconditionError(f"Node '{name}': expression '{expr.source}' uses non-parents {sorted(stray)}")

    def to_dict(self) -> dict:
        return {'graph': self.dag.edges(), 'nodes': {k: v.to_dict() for k, v in self.nodes.items()}}


def sample_cpcm(spec: CpcmSpec, n: int, seed: int, scenario: str = 'cpcm') -> LabeledDataset:
    """Sample nodes in topological order; X_j = F_j^{-1}(U; theta_j(parents))"""
    if n < 1:
        raise PreconditionError(f"n must be positive, got {n}")
    dag = spec.dag
    values: Dict[str, np.ndarray] = {}
    for j in dag.topological_order():
        name = dag.names[j]
        node = spec.nodes[name]
        rng = make_rng(seed, 'node', name)
        if not parents(dag, j):
            values[name] = node.source.sample(n, rng)
            continue
        family = get_family(node.family)
        theta = np.column_stack([expr.evaluate(values, n) for expr in node.expressions()])
        try:
            theta = family.check_params(theta)
        except DomainError as e:
            raise DomainError(f"node '{name}': {e}")
        u = rng.uniform(np.finfo(float).tiny, 1.0, n)
        values[name] = family.ppf(theta, u)
    frame = pd.DataFrame({name: values[name] for name in dag.names})
    logging.info(f"Sampled {n} rows from CPCM over {list(dag.names)} (seed {seed})")
    return LabeledDataset(frame, dag, seed, scenario, metadata={'spec': spec.to_dict()})
