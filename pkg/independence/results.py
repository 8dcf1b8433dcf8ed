from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict

import numpy as np


class TestMethod(str, Enum):
    __test__ = False

    HSIC = 'hsic'
    HOEFFDING_D = 'hoeffding_d'
    JOINT_PERM = 'joint_perm'
    AD_KSAMPLE = 'ad_ksample'


@dataclass
class TestResult:
    __test__ = False

    statistic: float
    p_value: float
    method: TestMethod
    n_permutations: int
    seed: int
    calibration: Dict[str, Any] = field(default_factory=dict)

    def rejects(self, alpha: float) -> bool:
        return self.p_value < alpha

    def to_dict(self) -> dict:
        return {
            'statistic': self.statistic,
            'p_value': self.p_value,
            'method': self.method.value,
            'n_permutations': self.n_permutations,
            'seed': self.seed,
            'calibration': dict(self.calibration),
        }


def permutation_p_value(observed: float, permuted: np.ndarray) -> float:
    """Add-one permutation p-value: (1 + #{T_b >= T}) / (B + 1)"""
    permuted = np.asarray(permuted, dtype=float)
    slack = 1e-12 * max(1.0, abs(observed))
    exceed = int(np.sum(permuted >= observed - slack))
    return (1.0 + exceed) / (permuted.size + 1.0)


def permutation_rng(seed: int) -> np.random.Generator:
    """Counter-based generator so a permutation stream is fixed by its seed"""
    return np.random.Generator(np.random.Philox(int(seed)))
