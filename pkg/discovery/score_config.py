from dataclasses import asdict, dataclass
from typing import Optional

from config import Config
from cpcm_errors import PreconditionError


@dataclass(frozen=True)
class ScoreConfig:
    """Settings shared by bivariate discovery and the DAG score search

    rho is always -log p of the joint residual independence test.
    """

    lam: float = 2.0
    alpha: float = 0.05
    seed: int = 0
    n_perm: int = 499
    fallback: bool = True
    max_workers: int = 1
    max_bandwidth_points: int = 1000
    degree: int = 3
    n_interior_knots: int = 10
    cv_folds: int = 5
    max_iter: int = 100
    smoothing: Optional[float] = None

    def __post_init__(self):
        if self.lam < 0:
            raise PreconditionError(f"lambda must be nonnegative, got {self.lam}")
        if not 0.0 < self.alpha < 1.0:
            raise PreconditionError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.n_perm < 1:
            raise PreconditionError(f"n_perm must be positive, got {self.n_perm}")

    @classmethod
    def from_config(cls, config: Config, **overrides) -> 'ScoreConfig':
        """Defaults from the environment-backed Config, explicit overrides win"""
        values = dict(
            lam=config.DEFAULT_LAMBDA,
            alpha=config.DEFAULT_ALPHA,
            n_perm=config.N_PERM_DISCOVERY,
            max_workers=config.CPCM_THREADS,
            max_bandwidth_points=config.MEDIAN_HEURISTIC_MAX_POINTS,
            degree=config.SPLINE_DEGREE,
            n_interior_knots=config.SPLINE_INTERIOR_KNOTS,
            cv_folds=config.CV_FOLDS,
            max_iter=config.MAX_NEWTON_ITER,
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def fit_options(self) -> dict:
        return {
            'degree': self.degree,
            'n_interior_knots': self.n_interior_knots,
            'cv_folds': self.cv_folds,
            'max_iter': self.max_iter,
            'smoothing': self.smoothing,
        }

    def to_dict(self) -> dict:
        out = asdict(self)
        out['lambda'] = out.pop('lam')
        return out
