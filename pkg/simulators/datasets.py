import json
import logging
import os
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import pandas as pd

from cpcm_errors import PreconditionError
from discovery.graphs import Dag

ENV_COLUMN = 'env'


def sidecar_path(csv_path: str) -> str:
    stem, _ = os.path.splitext(csv_path)
    return f"{stem}.json"


@dataclass
class LabeledDataset:
    """Simulated sample with its ground-truth graph and generation metadata"""

    frame: pd.DataFrame
    dag: Dag
    seed: int
    scenario: str
    env: Optional[np.ndarray] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.frame) < 1:
            raise PreconditionError("a dataset needs at least one row")
        if list(self.frame.columns) != list(self.dag.names):
            raise PreconditionError(f"columns {list(self.frame.columns)} do not match graph nodes {list(self.dag.names)}")
        if self.env is not None and len(self.env) != len(self.frame):
            raise PreconditionError("env labels must have one entry per row")

    @property
    def names(self) -> List[str]:
        return list(self.frame.columns)

    @property
    def matrix(self) -> np.ndarray:
        return self.frame.to_numpy(dtype=float)

    @property
    def n(self) -> int:
        return len(self.frame)

    def column(self, name: str) -> np.ndarray:
        return self.frame[name].to_numpy(dtype=float)

    def sidecar(self) -> dict:
        return {
            'scenario': self.scenario,
            'seed': self.seed,
            'n': self.n,
            'columns': self.names,
            'ground_truth': self.dag.edges(),
            'has_env': self.env is not None,
            'metadata': self.metadata,
        }

    def to_csv(self, path: str):
        """Write the CSV (header row, optional env column) and its JSON sidecar"""
        out = self.frame.copy()
        if self.env is not None:
            out[ENV_COLUMN] = np.asarray(self.env, dtype=int)
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        out.to_csv(path, index=False, float_format='%.17g', encoding='utf-8')
        with open(sidecar_path(path), 'w', encoding='utf-8') as f:
            json.dump(self.sidecar(), f, indent=2, sort_keys=True)
        logging.info(f"Wrote {self.n} rows of scenario {self.scenario} to {path}")

    @classmethod
    def from_csv(cls, path: str) -> 'LabeledDataset':
        frame = pd.read_csv(path)
        with open(sidecar_path(path), encoding='utf-8') as f:
            meta = json.load(f)
        env = None
        if ENV_COLUMN in frame.columns:
            env = frame.pop(ENV_COLUMN).to_numpy(dtype=int)
        dag = Dag.from_edges(list(frame.columns), meta.get('ground_truth', []))
        return cls(frame, dag, int(meta['seed']), meta['scenario'], env, meta.get('metadata', {}))
