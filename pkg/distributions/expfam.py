"""Catalog of continuous exponential-family distributions.

Every family exposes vectorised log-densities, CDFs, quantiles, sufficient
statistics and the link-scale derivatives the spline estimator needs.
Parameters are always passed as an ``n x q`` matrix (one row per
observation); the module-level helpers at the bottom accept the scalar
forms used by callers and tests.
"""
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import (betainc, betaincinv, betaln, digamma, gammainc,
                           gammaincinv, gammaln, ndtr, ndtri, polygamma)

from cpcm_errors import DomainError, PreconditionError
from distributions.links import Link

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
QUANTILE_TOL = 1e-10

ParamVector = Sequence[float]


class FamilyId(str, Enum):
    GAUSSIAN = 'gaussian'
    GAUSSIAN_FIXED_VAR = 'gaussian_fixed_var'
    GAMMA = 'gamma'
    GAMMA_FIXED_SCALE = 'gamma_fixed_scale'
    EXPONENTIAL = 'exponential'
    PARETO = 'pareto'
    BETA = 'beta'


@dataclass(frozen=True)
class Support:
    lower: float
    upper: float
    lower_closed: bool
    upper_closed: bool
    label: str

    def contains(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        above = y >= self.lower if self.lower_closed else y > self.lower
        below = y <= self.upper if self.upper_closed else y < self.upper
        return above & below & ~np.isnan(y)

    def clip_inside(self, y: np.ndarray) -> np.ndarray:
        """Clip values into the support, nudging off open endpoints"""
        lo = self.lower if self.lower_closed else np.nextafter(self.lower, np.inf)
        hi = self.upper if self.upper_closed else np.nextafter(self.upper, -np.inf)
        return np.clip(y, lo, hi)

    def to_dict(self) -> dict:
        return {'lower': self.lower, 'upper': self.upper, 'label': self.label}


REAL_LINE = Support(-np.inf, np.inf, False, False, 'R')
POSITIVE = Support(0.0, np.inf, False, False, '(0,inf)')
PARETO_SUPPORT = Support(1.0, np.inf, True, False, '[1,inf)')
UNIT_INTERVAL = Support(0.0, 1.0, False, False, '(0,1)')

OPEN_REAL = (-np.inf, np.inf)
OPEN_POSITIVE = (0.0, np.inf)


class LogLikelihood(NamedTuple):
    value: float
    finite: bool


class Family(ABC):
    """A continuous exponential family with fixed support"""

    id: str
    q: int
    support: Support
    param_names: Tuple[str, ...]
    param_domains: Tuple[Tuple[float, float], ...]
    links: Tuple[Link, ...]

    def __repr__(self):
        return f"Family({self.id})"

    # -- parameter handling -------------------------------------------------

    def check_params(self, theta: np.ndarray) -> np.ndarray:
        """Validate an n x q parameter matrix; domain violations are hard errors"""
        theta = np.asarray(theta, dtype=float)
        if theta.ndim != 2 or theta.shape[1] != self.q:
            raise DomainError(f"{self.id}: expected {self.q} parameter(s) per row, got shape {theta.shape}")
        for k, (name, (lo, hi)) in enumerate(zip(self.param_names, self.param_domains)):
            col = theta[:, k]
            bad = ~(np.isfinite(col) & (col > lo) & (col < hi))
            if np.any(bad):
                value = col[np.flatnonzero(bad)[0]]
                raise DomainError(f"{self.id}: parameter '{name}' must lie in ({lo}, {hi}), got {value}")
        return theta

    def param_matrix(self, params, n: int = 1) -> np.ndarray:
        """Broadcast a single ParamVector, a per-observation list or a matrix to n x q"""
        arr = np.asarray(params, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            if arr.size == self.q:
                arr = arr[np.newaxis, :]
            elif self.q == 1:
                arr = arr[:, np.newaxis]
            else:
                raise DomainError(f"{self.id}: expected {self.q} parameters, got {arr.size}")
        if arr.shape[0] == 1 and n > 1:
            arr = np.repeat(arr, n, axis=0)
        return self.check_params(arr)

    def links_to_theta(self, eta: np.ndarray) -> np.ndarray:
        """Apply inverse links column by column"""
        return np.column_stack([link.to_theta(eta[:, k]) for k, link in enumerate(self.links)])

    def theta_to_links(self, theta: np.ndarray) -> np.ndarray:
        return np.column_stack([link.to_eta(theta[:, k]) for k, link in enumerate(self.links)])

    # -- distribution functions ---------------------------------------------

    def logpdf(self, theta: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Log density row by row; -inf outside the support"""
        y = np.asarray(y, dtype=float)
        out = np.full(y.shape, -np.inf)
        inside = self.support.contains(y)
        if np.any(inside):
            out[inside] = self._logpdf(theta[inside], y[inside])
        return out

    def cdf(self, theta: np.ndarray, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = np.where(y > self.support.lower, 1.0, 0.0)
        inside = self.support.contains(y)
        if np.any(inside):
            out[inside] = self._cdf(theta[inside], y[inside])
        return np.clip(out, 0.0, 1.0)

    def ppf(self, theta: np.ndarray, u: np.ndarray) -> np.ndarray:
        """Quantiles refined until |cdf(y) - u| <= 1e-10"""
        u = np.asarray(u, dtype=float)
        if np.any(~((u > 0.0) & (u < 1.0))):
            bad = u[~((u > 0.0) & (u < 1.0))][0]
            raise DomainError(f"{self.id}: quantile level must lie in (0, 1), got {bad}")
        y = self.support.clip_inside(self._ppf(theta, u))
        return self._refine_quantiles(theta, u, y)

    def sufficient_statistics(self, y) -> np.ndarray:
        """n x q matrix of T(y)"""
        y = np.atleast_1d(np.asarray(y, dtype=float))
        inside = self.support.contains(y)
        if not np.all(inside):
            raise DomainError(f"{self.id}: value {y[~inside][0]} lies outside the support {self.support.label}")
        return self._suff(y)

    def eta_derivatives(self, theta: np.ndarray, y: np.ndarray):
        """Score, observed Hessian and expected information on the link scale

        Returns arrays of shape (n, q), (n, q, q), (n, q, q).
        """
        d1, d2, info = self._theta_derivatives(theta, y)
        g1 = np.column_stack([link.dtheta_deta(theta[:, k]) for k, link in enumerate(self.links)])
        g2 = np.column_stack([link.d2theta_deta2(theta[:, k]) for k, link in enumerate(self.links)])
        score = d1 * g1
        outer = g1[:, :, np.newaxis] * g1[:, np.newaxis, :]
        hess = d2 * outer
        idx = np.arange(self.q)
        hess[:, idx, idx] += d1 * g2
        return score, hess, info * outer

    def _refine_quantiles(self, theta: np.ndarray, u: np.ndarray, y: np.ndarray) -> np.ndarray:
        # Newton polish, then a bracketed root search for anything still off
        for _ in range(4):
            err = self.cdf(theta, y) - u
            if np.all(np.abs(err) <= QUANTILE_TOL):
                return y
            dens = np.exp(self.logpdf(theta, y))
            step = np.where(dens > 0, err / np.where(dens > 0, dens, 1.0), 0.0)
            candidate = self.support.clip_inside(y - step)
            better = np.abs(self.cdf(theta, candidate) - u) < np.abs(err)
            y = np.where(better, candidate, y)
        err = np.abs(self.cdf(theta, y) - u)
        for i in np.flatnonzero(err > QUANTILE_TOL):
            y[i] = self._bracketed_quantile(theta[i:i + 1], u[i], y[i])
        return y

    def _bracketed_quantile(self, theta_row: np.ndarray, u: float, start: float) -> float:
        def gap(value):
            return self.cdf(theta_row, np.array([value]))[0] - u

        lo, hi = start, start
        width = max(1.0, abs(start))
        for _ in range(200):
            if gap(lo) <= 0:
                break
            lo = max(lo - width, self.support.lower) if np.isfinite(self.support.lower) else lo - width
            width *= 2.0
        width = max(1.0, abs(start))
        for _ in range(200):
            if gap(hi) >= 0:
                break
            hi = min(hi + width, self.support.upper) if np.isfinite(self.support.upper) else hi + width
            width *= 2.0
        if lo == hi:
            return lo
        return brentq(gap, lo, hi, xtol=1e-14, rtol=1e-15, maxiter=500)

    # -- per-family pieces ---------------------------------------------------

    @abstractmethod
    def _logpdf(self, theta, y): ...

    @abstractmethod
    def _cdf(self, theta, y): ...

    @abstractmethod
    def _ppf(self, theta, u): ...

    @abstractmethod
    def _suff(self, y): ...

    @abstractmethod
    def _theta_derivatives(self, theta, y): ...

    @abstractmethod
    def initial_params(self, y: np.ndarray) -> np.ndarray:
        """Constant, in-domain starting parameters from the marginal sample"""

    def to_dict(self) -> dict:
        return {'id': self.id, 'q': self.q, 'support': self.support.to_dict(),
                'params': list(self.param_names), 'links': [link.value for link in self.links]}


def _moments(y: np.ndarray) -> Tuple[float, float]:
    m = float(np.mean(y))
    v = float(np.var(y))
    return m, max(v, 1e-12)


class Gaussian(Family):
    id = FamilyId.GAUSSIAN.value
    q = 2
    support = REAL_LINE
    param_names = ('mu', 'sigma')
    param_domains = (OPEN_REAL, OPEN_POSITIVE)
    links = (Link.IDENTITY, Link.LOG)

    def _logpdf(self, theta, y):
        mu, sigma = theta[:, 0], theta[:, 1]
        z = (y - mu) / sigma
        return -LOG_SQRT_2PI - np.log(sigma) - 0.5 * z * z

    def _cdf(self, theta, y):
        return ndtr((y - theta[:, 0]) / theta[:, 1])

    def _ppf(self, theta, u):
        return theta[:, 0] + theta[:, 1] * ndtri(u)

    def _suff(self, y):
        return np.column_stack([y, y * y])

    def _theta_derivatives(self, theta, y):
        mu, sigma = theta[:, 0], theta[:, 1]
        r = y - mu
        s2 = sigma * sigma
        d1 = np.column_stack([r / s2, -1.0 / sigma + r * r / (s2 * sigma)])
        d2 = np.empty((y.size, 2, 2))
        d2[:, 0, 0] = -1.0 / s2
        d2[:, 0, 1] = d2[:, 1, 0] = -2.0 * r / (s2 * sigma)
        d2[:, 1, 1] = 1.0 / s2 - 3.0 * r * r / (s2 * s2)
        info = np.zeros((y.size, 2, 2))
        info[:, 0, 0] = 1.0 / s2
        info[:, 1, 1] = 2.0 / s2
        return d1, d2, info

    def initial_params(self, y):
        m, v = _moments(y)
        return np.array([m, np.sqrt(v)])


class GaussianFixedVariance(Family):
    """Gaussian with sigma fixed at 1; the mean is the only free parameter"""

    id = FamilyId.GAUSSIAN_FIXED_VAR.value
    q = 1
    support = REAL_LINE
    param_names = ('mu',)
    param_domains = (OPEN_REAL,)
    links = (Link.IDENTITY,)

    def _logpdf(self, theta, y):
        z = y - theta[:, 0]
        return -LOG_SQRT_2PI - 0.5 * z * z

    def _cdf(self, theta, y):
        return ndtr(y - theta[:, 0])

    def _ppf(self, theta, u):
        return theta[:, 0] + ndtri(u)

    def _suff(self, y):
        return y[:, np.newaxis].copy()

    def _theta_derivatives(self, theta, y):
        d1 = (y - theta[:, 0])[:, np.newaxis]
        d2 = np.full((y.size, 1, 1), -1.0)
        return d1, d2, -d2

    def initial_params(self, y):
        return np.array([float(np.mean(y))])


class Gamma(Family):
    """Gamma with shape alpha and rate beta"""

    id = FamilyId.GAMMA.value
    q = 2
    support = POSITIVE
    param_names = ('alpha', 'beta')
    param_domains = (OPEN_POSITIVE, OPEN_POSITIVE)
    links = (Link.LOG, Link.LOG)

    def _logpdf(self, theta, y):
        a, b = theta[:, 0], theta[:, 1]
        return a * np.log(b) - gammaln(a) + (a - 1.0) * np.log(y) - b * y

    def _cdf(self, theta, y):
        return gammainc(theta[:, 0], theta[:, 1] * y)

    def _ppf(self, theta, u):
        return gammaincinv(theta[:, 0], u) / theta[:, 1]

    def _suff(self, y):
        return np.column_stack([np.log(y), y])

    def _theta_derivatives(self, theta, y):
        a, b = theta[:, 0], theta[:, 1]
        trigamma = polygamma(1, a)
        d1 = np.column_stack([np.log(b) - digamma(a) + np.log(y), a / b - y])
        d2 = np.empty((y.size, 2, 2))
        d2[:, 0, 0] = -trigamma
        d2[:, 0, 1] = d2[:, 1, 0] = 1.0 / b
        d2[:, 1, 1] = -a / (b * b)
        return d1, d2, -d2

    def initial_params(self, y):
        m, v = _moments(y)
        return np.array([m * m / v, m / v])


class GammaFixedScale(Family):
    """Gamma with the scale fixed at 1; the shape alpha is free"""

    id = FamilyId.GAMMA_FIXED_SCALE.value
    q = 1
    support = POSITIVE
    param_names = ('alpha',)
    param_domains = (OPEN_POSITIVE,)
    links = (Link.LOG,)

    def _logpdf(self, theta, y):
        a = theta[:, 0]
        return -gammaln(a) + (a - 1.0) * np.log(y) - y

    def _cdf(self, theta, y):
        return gammainc(theta[:, 0], y)

    def _ppf(self, theta, u):
        return gammaincinv(theta[:, 0], u)

    def _suff(self, y):
        return np.log(y)[:, np.newaxis]

    def _theta_derivatives(self, theta, y):
        a = theta[:, 0]
        d1 = (np.log(y) - digamma(a))[:, np.newaxis]
        d2 = (-polygamma(1, a))[:, np.newaxis, np.newaxis]
        return d1, d2, -d2

    def initial_params(self, y):
        return np.array([max(float(np.mean(y)), 1e-6)])


class Exponential(Family):
    id = FamilyId.EXPONENTIAL.value
    q = 1
    support = POSITIVE
    param_names = ('rate',)
    param_domains = (OPEN_POSITIVE,)
    links = (Link.LOG,)

    def _logpdf(self, theta, y):
        r = theta[:, 0]
        return np.log(r) - r * y

    def _cdf(self, theta, y):
        return -np.expm1(-theta[:, 0] * y)

    def _ppf(self, theta, u):
        return -np.log1p(-u) / theta[:, 0]

    def _suff(self, y):
        return y[:, np.newaxis].copy()

    def _theta_derivatives(self, theta, y):
        r = theta[:, 0]
        d1 = (1.0 / r - y)[:, np.newaxis]
        d2 = (-1.0 / (r * r))[:, np.newaxis, np.newaxis]
        return d1, d2, -d2

    def initial_params(self, y):
        return np.array([1.0 / max(float(np.mean(y)), 1e-12)])


class Pareto(Family):
    """Pareto on [1, inf) with density theta / y^(theta + 1)"""

    id = FamilyId.PARETO.value
    q = 1
    support = PARETO_SUPPORT
    param_names = ('theta',)
    param_domains = (OPEN_POSITIVE,)
    links = (Link.LOG,)

    def _logpdf(self, theta, y):
        t = theta[:, 0]
        return np.log(t) - (t + 1.0) * np.log(y)

    def _cdf(self, theta, y):
        return -np.expm1(-theta[:, 0] * np.log(y))

    def _ppf(self, theta, u):
        return np.exp(-np.log1p(-u) / theta[:, 0])

    def _suff(self, y):
        return np.log(y)[:, np.newaxis]

    def _theta_derivatives(self, theta, y):
        t = theta[:, 0]
        d1 = (1.0 / t - np.log(y))[:, np.newaxis]
        d2 = (-1.0 / (t * t))[:, np.newaxis, np.newaxis]
        return d1, d2, -d2

    def initial_params(self, y):
        mean_log = float(np.mean(np.log(y)))
        return np.array([1.0 / mean_log if mean_log > 1e-12 else 1.0])


class Beta(Family):
    id = FamilyId.BETA.value
    q = 2
    support = UNIT_INTERVAL
    param_names = ('alpha', 'beta')
    param_domains = (OPEN_POSITIVE, OPEN_POSITIVE)
    links = (Link.LOG, Link.LOG)

    def _logpdf(self, theta, y):
        a, b = theta[:, 0], theta[:, 1]
        return (a - 1.0) * np.log(y) + (b - 1.0) * np.log1p(-y) - betaln(a, b)

    def _cdf(self, theta, y):
        return betainc(theta[:, 0], theta[:, 1], y)

    def _ppf(self, theta, u):
        return betaincinv(theta[:, 0], theta[:, 1], u)

    def _suff(self, y):
        return np.column_stack([np.log(y), np.log1p(-y)])

    def _theta_derivatives(self, theta, y):
        a, b = theta[:, 0], theta[:, 1]
        dsum = digamma(a + b)
        tsum = polygamma(1, a + b)
        d1 = np.column_stack([dsum - digamma(a) + np.log(y), dsum - digamma(b) + np.log1p(-y)])
        d2 = np.empty((y.size, 2, 2))
        d2[:, 0, 0] = tsum - polygamma(1, a)
        d2[:, 0, 1] = d2[:, 1, 0] = tsum
        d2[:, 1, 1] = tsum - polygamma(1, b)
        return d1, d2, -d2

    def initial_params(self, y):
        m, v = _moments(y)
        common = m * (1.0 - m) / v - 1.0
        if common <= 0:
            return np.array([1.0, 1.0])
        return np.array([m * common, (1.0 - m) * common])


FAMILIES = {
    FamilyId.GAUSSIAN.value: Gaussian(),
    FamilyId.GAUSSIAN_FIXED_VAR.value: GaussianFixedVariance(),
    FamilyId.GAMMA.value: Gamma(),
    FamilyId.GAMMA_FIXED_SCALE.value: GammaFixedScale(),
    FamilyId.EXPONENTIAL.value: Exponential(),
    FamilyId.PARETO.value: Pareto(),
    FamilyId.BETA.value: Beta(),
}


def get_family(family: Union[Family, FamilyId, str]) -> Family:
    """Resolve a Family instance from an instance, enum member or lowercase id"""
    if isinstance(family, Family):
        return family
    key = family.value if isinstance(family, FamilyId) else str(family).strip().lower()
    if key not in FAMILIES:
        valid = ', '.join(FAMILIES)
        raise DomainError(f"Unknown family '{family}'. Valid ids: {valid}")
    return FAMILIES[key]


def _scalar_or_array(values: np.ndarray, like):
    return float(values[0]) if np.ndim(like) == 0 else values


def density(family, params: ParamVector, y):
    """h1(y) h2(theta) exp(theta . T(y)) inside the support, 0 outside"""
    fam = get_family(family)
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    theta = fam.param_matrix(params, y_arr.size)
    return _scalar_or_array(np.exp(fam.logpdf(theta, y_arr)), y)


def cdf(family, params: ParamVector, y):
    fam = get_family(family)
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    theta = fam.param_matrix(params, y_arr.size)
    return _scalar_or_array(fam.cdf(theta, y_arr), y)


def quantile(family, params: ParamVector, u):
    fam = get_family(family)
    u_arr = np.atleast_1d(np.asarray(u, dtype=float))
    theta = fam.param_matrix(params, u_arr.size)
    return _scalar_or_array(fam.ppf(theta, u_arr), u)


def sufficient_stats(family, y) -> np.ndarray:
    """T(y) as a vector of length q (or an n x q matrix for vector input)"""
    fam = get_family(family)
    stats = fam.sufficient_statistics(y)
    return stats[0] if np.ndim(y) == 0 else stats


def log_likelihood(family, params_per_obs, y) -> LogLikelihood:
    """Sum of log densities; a -inf total is reported through the finite flag"""
    fam = get_family(family)
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    theta = np.asarray(params_per_obs, dtype=float)
    if theta.ndim == 1:
        theta = theta[:, np.newaxis] if fam.q == 1 else theta[np.newaxis, :]
    if theta.shape[0] != y_arr.size:
        raise PreconditionError(f"log_likelihood: {theta.shape[0]} parameter rows for {y_arr.size} observations")
    theta = fam.check_params(theta)
    values = fam.logpdf(theta, y_arr)
    total = float(np.sum(values))
    finite = bool(np.isfinite(total))
    if not finite:
        logging.debug(f"log_likelihood for {fam.id}: {int(np.sum(~np.isfinite(values)))} observations outside the support")
        total = -np.inf
    return LogLikelihood(total, finite)


def affine_independence_det(family, witnesses: Sequence[float]) -> float:
    """Determinant of [T_j(y_i) - T_j(y_0)], i = 1..q, for witness points y_0..y_q"""
    fam = get_family(family)
    points = np.asarray(witnesses, dtype=float)
    if points.size != fam.q + 1:
        raise PreconditionError(f"{fam.id}: need {fam.q + 1} witness points, got {points.size}")
    stats = fam.sufficient_statistics(points)
    return float(np.linalg.det(stats[1:] - stats[0]))
