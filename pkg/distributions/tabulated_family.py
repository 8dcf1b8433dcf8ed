"""One-parameter exponential family built from tabulated T(y) and log h1(y).

Density on a bounded support: p(y; theta) = h1(y) exp(theta * T(y)) / Z(theta),
with Z obtained by trapezoidal quadrature on the grid. Useful for building a
cause family whose sufficient statistic is an arbitrary function, e.g. the
parameter map of a known forward model.
"""
import logging
from typing import Callable, Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from cpcm_errors import PreconditionError
from distributions.expfam import OPEN_REAL, Family, Support
from distributions.links import Link


class TabulatedFamily(Family):
    q = 1
    param_names = ('theta',)
    param_domains = (OPEN_REAL,)
    links = (Link.IDENTITY,)

    def __init__(self, grid, t_values, log_h1_values, family_id: str = 'tabulated'):
        grid = np.asarray(grid, dtype=float)
        t_values = np.asarray(t_values, dtype=float)
        log_h1_values = np.asarray(log_h1_values, dtype=float)
        if grid.ndim != 1 or grid.size < 10:
            raise PreconditionError("Tabulated family needs a 1-D grid with at least 10 points")
        if not np.all(np.diff(grid) > 0):
            raise PreconditionError("Tabulated family grid must be strictly ascending")
        if t_values.shape != grid.shape or log_h1_values.shape != grid.shape:
            raise PreconditionError("Tabulated T and log h1 must match the grid shape")
        if not (np.all(np.isfinite(t_values)) and np.all(np.isfinite(log_h1_values))):
            raise PreconditionError("Tabulated T and log h1 must be finite on the grid")
        self.id = family_id
        self.grid = grid
        self.t_values = t_values
        self.log_h1_values = log_h1_values
        self.support = Support(float(grid[0]), float(grid[-1]), True, True,
                               f"[{grid[0]:g},{grid[-1]:g}]")
        logging.debug(f"Tabulated family '{family_id}' on {grid.size} grid points over {self.support.label}")

    @classmethod
    def from_functions(cls, lower: float, upper: float, t_func: Callable, log_h1_func: Callable,
                       n_grid: int = 2001, family_id: str = 'tabulated') -> 'TabulatedFamily':
        """Tabulate T and log h1 on an even grid over [lower, upper]"""
        grid = np.linspace(lower, upper, n_grid)
        return cls(grid, t_func(grid), log_h1_func(grid), family_id=family_id)

    def _log_kernel(self, theta: np.ndarray) -> np.ndarray:
        """Unnormalised log density on the grid, one row per parameter value"""
        return self.log_h1_values[np.newaxis, :] + theta[:, 0:1] * self.t_values[np.newaxis, :]

    def _normalised_grid_density(self, theta: np.ndarray):
        log_k = self._log_kernel(theta)
        shift = np.max(log_k, axis=1, keepdims=True)
        kernel = np.exp(log_k - shift)
        z = trapezoid(kernel, self.grid, axis=1)
        return kernel / z[:, np.newaxis], shift[:, 0] + np.log(z)

    def _cell(self, y: np.ndarray):
        i = np.clip(np.searchsorted(self.grid, y, side='right') - 1, 0, self.grid.size - 2)
        w = (y - self.grid[i]) / (self.grid[i + 1] - self.grid[i])
        return i, w

    def _logpdf(self, theta, y):
        _, log_z = self._normalised_grid_density(theta)
        t = np.interp(y, self.grid, self.t_values)
        log_h1 = np.interp(y, self.grid, self.log_h1_values)
        return log_h1 + theta[:, 0] * t - log_z

    def _cumulative(self, theta):
        dens, _ = self._normalised_grid_density(theta)
        cum = cumulative_trapezoid(dens, self.grid, axis=1, initial=0.0)
        return cum / cum[:, -1:]

    def _cdf(self, theta, y):
        cum = self._cumulative(theta)
        i, w = self._cell(y)
        rows = np.arange(y.size)
        return cum[rows, i] + w * (cum[rows, i + 1] - cum[rows, i])

    def _ppf(self, theta, u):
        cum = self._cumulative(theta)
        i = np.clip(np.sum(cum < u[:, np.newaxis], axis=1) - 1, 0, self.grid.size - 2)
        rows = np.arange(u.size)
        lo, hi = cum[rows, i], cum[rows, i + 1]
        w = np.where(hi > lo, (u - lo) / np.where(hi > lo, hi - lo, 1.0), 0.0)
        return self.grid[i] + w * (self.grid[i + 1] - self.grid[i])

    def _suff(self, y):
        return np.interp(y, self.grid, self.t_values)[:, np.newaxis]

    def _moments_of_t(self, theta):
        dens, _ = self._normalised_grid_density(theta)
        mean = trapezoid(dens * self.t_values, self.grid, axis=1)
        second = trapezoid(dens * self.t_values ** 2, self.grid, axis=1)
        return mean, np.maximum(second - mean ** 2, 0.0)

    def _theta_derivatives(self, theta, y):
        mean, var = self._moments_of_t(theta)
        d1 = (np.interp(y, self.grid, self.t_values) - mean)[:, np.newaxis]
        d2 = (-var)[:, np.newaxis, np.newaxis]
        return d1, d2, -d2

    def initial_params(self, y, start: Optional[float] = None):
        return np.array([0.0 if start is None else float(start)])

    def to_dict(self) -> dict:
        out = super().to_dict()
        out['grid_points'] = int(self.grid.size)
        return out
