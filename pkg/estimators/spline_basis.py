from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.interpolate import BSpline

from cpcm_errors import DegenerateInputError


@dataclass
class SplineBasis:
    """B-spline basis for one covariate, centred on the fit sample

    The last centred column is dropped: B-splines sum to one, so the centred
    columns are linearly dependent and the intercept lives in the model.
    Outside [lower, upper] the basis is continued linearly.
    """

    knots: np.ndarray
    degree: int
    lower: float
    upper: float
    column_means: np.ndarray

    @classmethod
    def from_covariate(cls, x: np.ndarray, n_interior: int = 10, degree: int = 3) -> 'SplineBasis':
        x = np.asarray(x, dtype=float)
        lower, upper = float(np.min(x)), float(np.max(x))
        if not upper > lower:
            raise DegenerateInputError("degenerate covariate")
        n_unique = np.unique(x).size
        n_int = max(0, min(n_interior, n_unique - degree - 1))
        interior = np.empty(0)
        if n_int > 0:
            interior = np.unique(np.quantile(x, np.linspace(0.0, 1.0, n_int + 2)[1:-1]))
            interior = interior[(interior > lower) & (interior < upper)]
        knots = np.concatenate([np.repeat(lower, degree + 1), interior, np.repeat(upper, degree + 1)])
        basis = cls(knots, degree, lower, upper, np.zeros(knots.size - degree - 1))
        raw, _ = basis.raw_design(x)
        basis.column_means = raw.mean(axis=0)
        return basis

    @property
    def n_basis(self) -> int:
        return self.knots.size - self.degree - 1

    @property
    def n_columns(self) -> int:
        return self.n_basis - 1

    @property
    def interior_knots(self) -> np.ndarray:
        return self.knots[self.degree + 1:self.knots.size - self.degree - 1]

    @property
    def distinct_knots(self) -> np.ndarray:
        return np.concatenate([[self.lower], self.interior_knots, [self.upper]])

    def _boundary_slopes(self) -> np.ndarray:
        spline = BSpline(self.knots, np.eye(self.n_basis), self.degree)
        return spline.derivative()(np.array([self.lower, self.upper]))

    def raw_design(self, x) -> Tuple[np.ndarray, np.ndarray]:
        """Uncentred basis rows and the mask of rows evaluated by extrapolation"""
        x = np.asarray(x, dtype=float)
        clipped = np.clip(x, self.lower, self.upper)
        mat = BSpline.design_matrix(clipped, self.knots, self.degree).toarray()
        below = x < self.lower
        above = x > self.upper
        if np.any(below | above):
            slopes = self._boundary_slopes()
            mat[below] += (x[below] - self.lower)[:, np.newaxis] * slopes[0]
            mat[above] += (x[above] - self.upper)[:, np.newaxis] * slopes[1]
        return mat, below | above

    def design(self, x) -> Tuple[np.ndarray, np.ndarray]:
        raw, mask = self.raw_design(x)
        return (raw - self.column_means)[:, :-1], mask

    def penalty(self) -> np.ndarray:
        """Second-difference penalty on the kept columns"""
        diff = np.diff(np.eye(self.n_basis), n=2, axis=0)[:, :-1]
        return diff.T @ diff

    def to_dict(self) -> dict:
        return {
            'knots': self.distinct_knots.tolist(),
            'degree': self.degree,
            'range': [self.lower, self.upper],
            'column_means': self.column_means.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> 'SplineBasis':
        degree = int(payload['degree'])
        distinct = np.asarray(payload['knots'], dtype=float)
        knots = np.concatenate([np.repeat(distinct[0], degree), distinct, np.repeat(distinct[-1], degree)])
        lower, upper = payload['range']
        return cls(knots, degree, float(lower), float(upper), np.asarray(payload['column_means'], dtype=float))
