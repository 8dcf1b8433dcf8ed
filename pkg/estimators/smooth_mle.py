"""Penalized spline maximum likelihood for covariate-dependent parameters.

Each distribution parameter gets its own additive predictor on the link
scale: an intercept plus one centred B-spline block per covariate. Blocks
are penalized by squared second differences; the penalty weight per
parameter is either supplied or chosen by K-fold cross-validated
log-likelihood. Data are put into a canonical (sorted) order before fitting
so the result does not depend on row order.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from cpcm_errors import DomainError, PreconditionError
from data_utils import as_column_matrix, as_vector, require_finite
from distributions.expfam import Family, get_family
from estimators.spline_basis import SplineBasis

SMOOTHING_GRID = tuple(10.0 ** k for k in range(-3, 4))
GRADIENT_TOL = 1e-6
RIDGE = 1e-8
MAX_HALVINGS = 30
# objective differences below this (relative) are rounding noise
ROUNDING_SLACK = 1e-12
MIN_OBSERVATIONS = 30


@dataclass
class FitDiagnostics:
    final_penalized_loglik: float
    newton_iterations: int
    converged: bool
    effective_df: List[float]
    gradient_max_norm: float = 0.0
    smoothing_source: str = 'cv'
    gradient_per_observation: float = 0.0

    def to_dict(self) -> dict:
        return {
            'final_penalized_loglik': self.final_penalized_loglik,
            'newton_iterations': self.newton_iterations,
            'converged': self.converged,
            'effective_df': list(self.effective_df),
            'gradient_max_norm': self.gradient_max_norm,
            'gradient_per_observation': self.gradient_per_observation,
            'smoothing_source': self.smoothing_source,
        }


@dataclass
class PredictedParams:
    """Per-row parameter vectors plus a mask of rows evaluated by extrapolation"""

    values: np.ndarray
    extrapolated: np.ndarray

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i):
        return self.values[i]

    def __iter__(self):
        return iter(self.values)


@dataclass
class ThetaModel:
    family: Family
    bases: List[SplineBasis]
    coefficients: np.ndarray
    smoothing: List[float]
    covariate_ranges: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def q(self) -> int:
        return self.family.q

    @property
    def n_covariates(self) -> int:
        return len(self.bases)

    @property
    def degree(self) -> int:
        return self.bases[0].degree

    @property
    def per_param(self) -> List[dict]:
        """Spline spec for each distribution parameter"""
        specs = []
        for k, name in enumerate(self.family.param_names):
            specs.append({
                'param': name,
                'link': self.family.links[k].value,
                'smoothing': self.smoothing[k],
                'intercept': float(self.coefficients[k, 0]),
                'blocks': [block.tolist() for block in self.coefficient_blocks(k)],
            })
        return specs

    def coefficient_blocks(self, k: int) -> List[np.ndarray]:
        blocks, start = [], 1
        for basis in self.bases:
            blocks.append(self.coefficients[k, start:start + basis.n_columns])
            start += basis.n_columns
        return blocks

    def design(self, x) -> Tuple[np.ndarray, np.ndarray]:
        x = as_column_matrix(x, 'x')
        if x.shape[1] != self.n_covariates:
            raise PreconditionError(f"dimension mismatch: model has {self.n_covariates} covariate(s), got {x.shape[1]}")
        return _design(self.bases, x)

    def linear_coefficients(self) -> Tuple[np.ndarray, np.ndarray]:
        """Intercept at x = 0 and per-covariate slopes on the link scale

        Only defined for degree-1 bases without interior knots.
        """
        if any(b.degree != 1 or b.interior_knots.size for b in self.bases):
            raise PreconditionError("linear coefficients need degree-1 bases without interior knots")
        width = np.array([b.upper - b.lower for b in self.bases])
        lead = self.coefficients[:, 1:]
        slopes = -lead / width
        offsets = np.array([b.upper / (b.upper - b.lower) - b.column_means[0] for b in self.bases])
        intercepts = self.coefficients[:, 0] + lead @ offsets
        return intercepts, slopes

    def to_dict(self) -> dict:
        return {
            'family': self.family.id,
            'links': [link.value for link in self.family.links],
            'smoothing': list(self.smoothing),
            'covariate_ranges': [list(r) for r in self.covariate_ranges],
            'bases': [basis.to_dict() for basis in self.bases],
            'coefficients': self.coefficients.tolist(),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> 'ThetaModel':
        family = get_family(payload['family'])
        bases = [SplineBasis.from_dict(b) for b in payload['bases']]
        coefficients = np.asarray(payload['coefficients'], dtype=float)
        expected = 1 + sum(b.n_columns for b in bases)
        if coefficients.shape != (family.q, expected):
            raise PreconditionError(f"coefficient matrix has shape {coefficients.shape}, expected {(family.q, expected)}")
        ranges = [tuple(r) for r in payload.get('covariate_ranges', [[b.lower, b.upper] for b in bases])]
        return cls(family, bases, coefficients, [float(s) for s in payload['smoothing']], ranges)


def _design(bases: Sequence[SplineBasis], x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    columns = [np.ones((x.shape[0], 1))]
    mask = np.zeros(x.shape[0], dtype=bool)
    for j, basis in enumerate(bases):
        block, extrapolated = basis.design(x[:, j])
        columns.append(block)
        mask |= extrapolated
    return np.hstack(columns), mask


def _penalty_matrix(bases: Sequence[SplineBasis]) -> Tuple[np.ndarray, np.ndarray]:
    """Block-diagonal difference penalty and ridge mask for one parameter"""
    m = 1 + sum(b.n_columns for b in bases)
    penalty = np.zeros((m, m))
    start = 1
    for basis in bases:
        stop = start + basis.n_columns
        penalty[start:stop, start:stop] = basis.penalty()
        start = stop
    ridge = np.eye(m)
    ridge[0, 0] = 0.0
    return penalty, ridge


class PenalizedLikelihood:
    """Sum of log densities minus sum_k lambda_k * c_k' P c_k (plus a tiny ridge)"""

    def __init__(self, family: Family, design: np.ndarray, y: np.ndarray,
                 smoothing: Sequence[float], penalty: np.ndarray, ridge: np.ndarray):
        self.family = family
        self.design = design
        self.y = y
        self.q = family.q
        self.m = design.shape[1]
        blocks = [lam * penalty + RIDGE * ridge for lam in smoothing]
        self.penalty = np.zeros((self.q * self.m, self.q * self.m))
        for k, block in enumerate(blocks):
            sl = slice(k * self.m, (k + 1) * self.m)
            self.penalty[sl, sl] = block

    def unpack(self, beta: np.ndarray) -> np.ndarray:
        return beta.reshape(self.q, self.m)

    def theta(self, beta: np.ndarray) -> np.ndarray:
        return self.family.links_to_theta(self.design @ self.unpack(beta).T)

    def loglik(self, beta: np.ndarray) -> float:
        theta = self.theta(beta)
        if not np.all(np.isfinite(theta)):
            return -np.inf
        with np.errstate(all='ignore'):
            value = float(np.sum(self.family.logpdf(theta, self.y)))
        return value if np.isfinite(value) else -np.inf

    def value(self, beta: np.ndarray) -> float:
        return self.loglik(beta) - float(beta @ self.penalty @ beta)

    def gradient(self, beta: np.ndarray) -> np.ndarray:
        score, _, _ = self.family.eta_derivatives(self.theta(beta), self.y)
        grad = (self.design.T @ score).T.ravel()
        return grad - 2.0 * self.penalty @ beta

    def curvature(self, beta: np.ndarray, expected: bool = False) -> np.ndarray:
        """Negative Hessian of the penalized objective (observed or expected information)"""
        _, hess, info = self.family.eta_derivatives(self.theta(beta), self.y)
        weights = info if expected else -hess
        out = np.empty((self.q * self.m, self.q * self.m))
        for k in range(self.q):
            for l in range(k, self.q):
                block = self.design.T @ (weights[:, k, l][:, np.newaxis] * self.design)
                out[k * self.m:(k + 1) * self.m, l * self.m:(l + 1) * self.m] = block
                out[l * self.m:(l + 1) * self.m, k * self.m:(k + 1) * self.m] = block.T
        return out + 2.0 * self.penalty


def _newton_direction(objective: PenalizedLikelihood, beta: np.ndarray, grad: np.ndarray) -> np.ndarray:
    try:
        factor = cho_factor(objective.curvature(beta))
        return cho_solve(factor, grad)
    except (LinAlgError, ValueError):
        pass
    # observed curvature not positive definite here; fall back to Fisher scoring
    fisher = objective.curvature(beta, expected=True)
    try:
        return cho_solve(cho_factor(fisher), grad)
    except (LinAlgError, ValueError):
        return np.linalg.lstsq(fisher, grad, rcond=None)[0]


def newton_fit(objective: PenalizedLikelihood, beta0: np.ndarray,
               max_iter: int = 100) -> Tuple[np.ndarray, FitDiagnostics]:
    """Newton-Raphson with step halving.

    A step is accepted when it raises the penalized objective, or when the
    change is within rounding of the current value and the gradient shrinks.
    Convergence is judged on the max-norm of the raw gradient.
    """
    n = objective.y.size
    beta = beta0.copy()
    current = objective.value(beta)
    if not np.isfinite(current):
        raise DomainError(f"{objective.family.id}: starting parameters give a non-finite likelihood")
    iterations = 0
    grad = objective.gradient(beta)
    grad_norm = float(np.max(np.abs(grad)))
    while grad_norm >= GRADIENT_TOL and iterations < max_iter:
        direction = _newton_direction(objective, beta, grad)
        slack = ROUNDING_SLACK * max(1.0, abs(current))
        step, accepted = 1.0, False
        for _ in range(MAX_HALVINGS):
            candidate = beta + step * direction
            value = objective.value(candidate)
            if np.isfinite(value) and value >= current:
                accepted = True
            elif np.isfinite(value) and value >= current - slack:
                candidate_grad = objective.gradient(candidate)
                accepted = float(np.max(np.abs(candidate_grad))) < grad_norm
            if accepted:
                break
            step *= 0.5
        iterations += 1
        if not accepted:
            logging.debug(f"{objective.family.id}: no ascent step found after {MAX_HALVINGS} halvings")
            break
        beta, current = candidate, value
        grad = objective.gradient(beta)
        grad_norm = float(np.max(np.abs(grad)))
        logging.debug(f"Newton iteration {iterations}: objective {current:.6f}, gradient {grad_norm:.2e}")
    converged = grad_norm < GRADIENT_TOL
    diagnostics = FitDiagnostics(
        final_penalized_loglik=current,
        newton_iterations=iterations,
        converged=converged,
        effective_df=_effective_df(objective, beta),
        gradient_max_norm=grad_norm,
        gradient_per_observation=grad_norm / n,
    )
    return beta, diagnostics


def _effective_df(objective: PenalizedLikelihood, beta: np.ndarray) -> List[float]:
    penalized = objective.curvature(beta, expected=True)
    unpenalized = penalized - 2.0 * objective.penalty
    try:
        influence = np.linalg.solve(penalized, unpenalized)
    except np.linalg.LinAlgError:
        influence = np.linalg.lstsq(penalized, unpenalized, rcond=None)[0]
    diag = np.diag(influence)
    return [float(np.sum(diag[k * objective.m:(k + 1) * objective.m])) for k in range(objective.q)]


class SplineConditionalFitter:
    """Fits ThetaModel objects for one family with fixed basis settings"""

    def __init__(self, family: Union[Family, str], degree: int = 3, n_interior_knots: int = 10,
                 cv_folds: int = 5, max_iter: int = 100, smoothing_grid: Sequence[float] = SMOOTHING_GRID):
        self.family = get_family(family)
        self.degree = degree
        self.n_interior_knots = n_interior_knots
        self.cv_folds = cv_folds
        self.max_iter = max_iter
        self.smoothing_grid = tuple(smoothing_grid)

    def _start(self, y: np.ndarray, m: int) -> np.ndarray:
        start = self.family.initial_params(y)
        eta0 = self.family.theta_to_links(start[np.newaxis, :])[0]
        beta = np.zeros((self.family.q, m))
        beta[:, 0] = eta0
        return beta.ravel()

    def _solve(self, design, y, smoothing, penalty, ridge):
        objective = PenalizedLikelihood(self.family, design, y, smoothing, penalty, ridge)
        return newton_fit(objective, self._start(y, design.shape[1]), self.max_iter)

    def _cv_loglik(self, design, y, folds, smoothing, penalty, ridge) -> float:
        total = 0.0
        for fold in range(self.cv_folds):
            train = folds != fold
            beta, _ = self._solve(design[train], y[train], smoothing, penalty, ridge)
            theta = self.family.links_to_theta(design[~train] @ beta.reshape(self.family.q, -1).T)
            with np.errstate(all='ignore'):
                held_out = float(np.sum(self.family.logpdf(theta, y[~train])))
            if not np.isfinite(held_out):
                return -np.inf
            total += held_out
        return total

    def select_smoothing(self, design, y, penalty, ridge) -> List[float]:
        """Shared grid search, then one coordinate pass per parameter"""
        q = self.family.q
        folds = np.arange(y.size) % self.cv_folds
        best = None
        best_score = -np.inf
        for lam in self.smoothing_grid:
            score = self._cv_loglik(design, y, folds, [lam] * q, penalty, ridge)
            if score > best_score:
                best, best_score = [lam] * q, score
        if best is None:
            logging.warning(f"{self.family.id}: every smoothing value gave a non-finite CV likelihood, using the largest")
            return [self.smoothing_grid[-1]] * q
        if q > 1:
            for k in range(q):
                for lam in self.smoothing_grid:
                    if lam == best[k]:
                        continue
                    trial = list(best)
                    trial[k] = lam
                    score = self._cv_loglik(design, y, folds, trial, penalty, ridge)
                    if score > best_score:
                        best, best_score = trial, score
        logging.debug(f"{self.family.id}: CV smoothing {best} (held-out loglik {best_score:.4f})")
        return best

    def fit(self, x, y, smoothing: Optional[Union[float, Sequence[float]]] = None) -> Tuple[ThetaModel, FitDiagnostics]:
        x = as_column_matrix(x, 'x')
        y = as_vector(y, 'y')
        n, p = x.shape
        if y.size != n:
            raise PreconditionError(f"x has {n} rows but y has {y.size}")
        if n < MIN_OBSERVATIONS:
            raise PreconditionError(f"fit_conditional needs at least {MIN_OBSERVATIONS} observations, got {n}")
        if p < 1:
            raise PreconditionError("fit_conditional needs at least one covariate")
        require_finite(x, 'x')
        require_finite(y, 'y')
        inside = self.family.support.contains(y)
        if not np.all(inside):
            raise DomainError(f"{self.family.id}: response value {y[~inside][0]} lies outside the support {self.family.support.label}")

        # canonical row order: lexicographic on the covariates, then the response
        order = np.lexsort(tuple([y] + [x[:, j] for j in reversed(range(p))]))
        x, y = x[order], y[order]

        bases = [SplineBasis.from_covariate(x[:, j], self.n_interior_knots, self.degree) for j in range(p)]
        design, _ = _design(bases, x)
        penalty, ridge = _penalty_matrix(bases)

        if smoothing is None:
            if np.any(penalty):
                lambdas = self.select_smoothing(design, y, penalty, ridge)
                source = 'cv'
            else:
                lambdas, source = [0.0] * self.family.q, 'none'
        else:
            lambdas = list(np.broadcast_to(np.asarray(smoothing, dtype=float), (self.family.q,)))
            if any(lam < 0 for lam in lambdas):
                raise PreconditionError(f"smoothing must be nonnegative, got {lambdas}")
            source = 'fixed'

        beta, diagnostics = self._solve(design, y, lambdas, penalty, ridge)
        diagnostics.smoothing_source = source
        if not diagnostics.converged:
            logging.warning(f"{self.family.id} fit did not converge after {diagnostics.newton_iterations} iterations "
                            f"(gradient {diagnostics.gradient_max_norm:.2e})")
        model = ThetaModel(
            family=self.family,
            bases=bases,
            coefficients=beta.reshape(self.family.q, -1),
            smoothing=[float(lam) for lam in lambdas],
            covariate_ranges=[(b.lower, b.upper) for b in bases],
        )
        return model, diagnostics


def fit_conditional(family, x, y, smoothing=None, degree: int = 3, n_interior_knots: int = 10,
                    cv_folds: int = 5, max_iter: int = 100) -> Tuple[ThetaModel, FitDiagnostics]:
    """Penalized spline MLE of theta(x) for the given family"""
    fitter = SplineConditionalFitter(family, degree=degree, n_interior_knots=n_interior_knots,
                                     cv_folds=cv_folds, max_iter=max_iter)
    return fitter.fit(x, y, smoothing=smoothing)


def constant_model(family, params, covariate_range: Tuple[float, float] = (0.0, 1.0)) -> ThetaModel:
    """A ThetaModel that returns the same parameters everywhere"""
    fam = get_family(family)
    theta = fam.param_matrix(params, 1)
    grid = np.linspace(covariate_range[0], covariate_range[1], 5)
    basis = SplineBasis.from_covariate(grid, n_interior=0, degree=1)
    coefficients = np.zeros((fam.q, 1 + basis.n_columns))
    coefficients[:, 0] = fam.theta_to_links(theta)[0]
    return ThetaModel(fam, [basis], coefficients, [0.0] * fam.q, [tuple(covariate_range)])


def predict_params(model: ThetaModel, x) -> PredictedParams:
    design, mask = model.design(x)
    theta = model.family.links_to_theta(design @ model.coefficients.T)
    if np.any(mask):
        logging.debug(f"{int(mask.sum())} of {mask.size} rows evaluated outside the fitted covariate range")
    return PredictedParams(values=theta, extrapolated=mask)


def pit_residuals(model: ThetaModel, x, y) -> np.ndarray:
    """Probability integral transform of y under the fitted conditional law"""
    y = as_vector(y, 'y')
    params = predict_params(model, x)
    if len(params) != y.size:
        raise PreconditionError(f"x has {len(params)} rows but y has {y.size}")
    return model.family.cdf(model.family.check_params(params.values), y)
