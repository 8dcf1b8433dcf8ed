import itertools
import json
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Set

import networkx as nx
import numpy as np

from cpcm_errors import CapacityError, PreconditionError

MAX_ENUMERATION_NODES = 5
ENUMERATION_CHUNK = 4096


def _check_adjacency(adjacency) -> np.ndarray:
    adj = np.asarray(adjacency, dtype=bool)
    if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
        raise PreconditionError(f"adjacency must be a square matrix, got shape {adj.shape}")
    if np.any(np.diag(adj)):
        raise PreconditionError("adjacency has a self-loop on its diagonal")
    return adj


def is_acyclic(adjacency) -> bool:
    """True iff the directed graph admits a topological order"""
    adj = _check_adjacency(adjacency)
    return nx.is_directed_acyclic_graph(nx.from_numpy_array(adj.astype(int), create_using=nx.DiGraph))


@dataclass(frozen=True)
class Dag:
    names: tuple
    adjacency: np.ndarray

    def __post_init__(self):
        adj = _check_adjacency(self.adjacency)
        if len(self.names) != adj.shape[0]:
            raise PreconditionError(f"{len(self.names)} names for a {adj.shape[0]}-node adjacency")
        if not is_acyclic(adj):
            raise PreconditionError("adjacency contains a directed cycle")
        object.__setattr__(self, 'names', tuple(self.names))
        object.__setattr__(self, 'adjacency', adj)

    @classmethod
    def empty(cls, names: Sequence[str]) -> 'Dag':
        return cls(tuple(names), np.zeros((len(names), len(names)), dtype=bool))

    @classmethod
    def from_edges(cls, names: Sequence[str], edges: Sequence[str]) -> 'Dag':
        """Build from "src->dst" strings"""
        index = {name: i for i, name in enumerate(names)}
        adj = np.zeros((len(names), len(names)), dtype=bool)
        for edge in edges:
            src, sep, dst = edge.partition('->')
            if not sep or src.strip() not in index or dst.strip() not in index:
                raise PreconditionError(f"Bad edge '{edge}'; expected 'src->dst' over {list(names)}")
            adj[index[src.strip()], index[dst.strip()]] = True
        return cls(tuple(names), adj)

    @property
    def d(self) -> int:
        return len(self.names)

    @property
    def n_edges(self) -> int:
        return int(self.adjacency.sum())

    def edges(self) -> List[str]:
        rows, cols = np.nonzero(self.adjacency)
        return [f"{self.names[i]}->{self.names[j]}" for i, j in zip(rows, cols)]

    def topological_order(self) -> List[int]:
        graph = nx.from_numpy_array(self.adjacency.astype(int), create_using=nx.DiGraph)
        return list(nx.lexicographical_topological_sort(graph))

    def with_edge(self, i: int, j: int) -> 'Dag':
        adj = self.adjacency.copy()
        adj[i, j] = True
        return Dag(self.names, adj)

    def to_json(self) -> str:
        return json.dumps(self.edges())

    def __eq__(self, other):
        return (isinstance(other, Dag) and self.names == other.names
                and np.array_equal(self.adjacency, other.adjacency))

    def __hash__(self):
        return hash((self.names, self.adjacency.tobytes()))

    def __repr__(self):
        return f"Dag({', '.join(self.edges()) or 'empty'})"


def parents(dag: Dag, j: int) -> Set[int]:
    if not 0 <= j < dag.d:
        raise PreconditionError(f"node index {j} out of range for a {dag.d}-node graph")
    return set(int(i) for i in np.flatnonzero(dag.adjacency[:, j]))


def _off_diagonal_cells(d: int):
    return [(i, j) for i in range(d) for j in range(d) if i != j]


def _acyclic_mask(adjacency: np.ndarray) -> np.ndarray:
    """Batch check: a d-node digraph is acyclic iff A^d == 0"""
    d = adjacency.shape[-1]
    power = adjacency.astype(np.int64)
    a = power.copy()
    for _ in range(d - 1):
        power = np.minimum(power @ a, 1)
    return ~power.reshape(power.shape[0], -1).any(axis=1)


def enumerate_dags(d: int, names: Optional[Sequence[str]] = None) -> Iterator[Dag]:
    """Every labelled DAG on d nodes, in lexicographic order of the off-diagonal bits"""
    if d < 1:
        raise PreconditionError(f"need at least one node, got d={d}")
    if d > MAX_ENUMERATION_NODES:
        raise CapacityError(f"exhaustive DAG search is capped at d={MAX_ENUMERATION_NODES}; the number of DAGs "
                            f"grows super-exponentially (29281 at d=5, over 3.7 million at d=6)")
    names = tuple(names) if names is not None else tuple(f"x{i + 1}" for i in range(d))
    cells = _off_diagonal_cells(d)
    n_bits = len(cells)
    rows = np.array([c[0] for c in cells], dtype=int)
    cols = np.array([c[1] for c in cells], dtype=int)
    weights = 1 << np.arange(n_bits - 1, -1, -1)
    for start in range(0, 1 << n_bits, ENUMERATION_CHUNK):
        codes = np.arange(start, min(start + ENUMERATION_CHUNK, 1 << n_bits))
        bits = (codes[:, np.newaxis] & weights) > 0
        adj = np.zeros((codes.size, d, d), dtype=bool)
        adj[:, rows, cols] = bits
        for matrix in adj[_acyclic_mask(adj)]:
            yield Dag(names, matrix)


def brute_force_dag_count(d: int) -> int:
    """Count acyclic off-diagonal patterns one at a time via is_acyclic"""
    cells = _off_diagonal_cells(d)
    count = 0
    for bits in itertools.product([False, True], repeat=len(cells)):
        adj = np.zeros((d, d), dtype=bool)
        for (i, j), bit in zip(cells, bits):
            adj[i, j] = bit
        count += is_acyclic(adj)
    return count
