"""Probability densities sampled on uniform grids.

A grid stands for the piecewise-linear interpolant through its samples, so
mass, CDF, tail integrals and inverse-CDF sampling are all exact for that
interpolant (trapezoid rule).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadParameters, UnknownFamily

DEFAULT_RESOLUTION = 2**14
MIN_RESOLUTION = 64
MASS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class DensityGrid:
    lower: float
    spacing: float
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size < 2:
            raise BadParameters("a density grid needs at least two points")
        if not self.spacing > 0:
            raise BadParameters(f"grid spacing must be positive, got {self.spacing}")
        if not np.all(np.isfinite(values)) or values.min() < 0:
            raise BadParameters("density values must be finite and nonnegative")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "spacing", float(self.spacing))

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def upper(self) -> float:
        return self.lower + (self.size - 1) * self.spacing

    @property
    def x(self) -> np.ndarray:
        return self.lower + self.spacing * np.arange(self.size)

    def mass(self) -> float:
        v = self.values
        return float(self.spacing * (v.sum() - 0.5 * (v[0] + v[-1])))

    def cell_masses(self) -> np.ndarray:
        v = self.values
        return 0.5 * self.spacing * (v[:-1] + v[1:])

    def cdf(self) -> np.ndarray:
        """Cumulative (unnormalized) mass at each grid point."""
        return np.concatenate(([0.0], np.cumsum(self.cell_masses())))

    def mean(self) -> float:
        # exact first moment of the piecewise-linear interpolant
        v, x, h = self.values, self.x, self.spacing
        cells = h * (v[:-1] * (2 * x[:-1] + x[1:]) + v[1:] * (x[:-1] + 2 * x[1:])) / 6.0
        return float(cells.sum() / self.mass())

    def normalized(self) -> DensityGrid:
        m = self.mass()
        if not m > 0:
            raise BadParameters("density has zero mass")
        return DensityGrid(self.lower, self.spacing, self.values / m)

    def __call__(self, x) -> np.ndarray:
        """Evaluate the interpolant (zero outside the support)."""
        return np.interp(x, self.x, self.values, left=0.0, right=0.0)


def _grid(lower, upper, values) -> DensityGrid:
    n = len(values)
    return DensityGrid(lower, (upper - lower) / (n - 1), values)


def _positive(params, name):
    try:
        value = float(params.pop(name))
    except KeyError:
        raise BadParameters(f"missing parameter {name!r}") from None
    except (TypeError, ValueError):
        raise BadParameters(f"parameter {name!r} must be a number") from None
    if not value > 0 or not np.isfinite(value):
        raise BadParameters(f"parameter {name!r} must be positive, got {value}")
    return value


def build_density(family: str, resolution: int = DEFAULT_RESOLUTION, **params) -> DensityGrid:
    """Unit-mass grid for a named family.

    Families: ``uniform(beta)`` on [-beta, beta]; ``triangular(beta)`` with
    peak 1/beta at 0; ``truncated_gaussian(sigma, cut)`` on [-cut, cut];
    ``tabulated(values, lower, upper)`` for arbitrary (renormalized) input.
    """
    if not isinstance(resolution, (int, np.integer)) or resolution < MIN_RESOLUTION:
        raise BadParameters(f"resolution must be an integer >= {MIN_RESOLUTION}, got {resolution!r}")
    params = dict(params)
    family = family.replace("-", "_")
    if family == "uniform":
        beta = _positive(params, "beta")
        grid = _grid(-beta, beta, np.full(resolution, 0.5 / beta))
    elif family == "triangular":
        beta = _positive(params, "beta")
        x = np.linspace(-beta, beta, resolution)
        grid = _grid(-beta, beta, np.clip(beta - np.abs(x), 0.0, None) / beta**2)
    elif family == "truncated_gaussian":
        sigma = _positive(params, "sigma")
        cut = _positive(params, "cut")
        x = np.linspace(-cut, cut, resolution)
        grid = _grid(-cut, cut, np.exp(-0.5 * (x / sigma) ** 2))
    elif family == "tabulated":
        try:
            values = np.asarray(params.pop("values"), dtype=np.float64)
            lower = float(params.pop("lower"))
            upper = float(params.pop("upper"))
        except KeyError as exc:
            raise BadParameters(f"missing parameter {exc.args[0]!r}") from None
        if not upper > lower:
            raise BadParameters("tabulated density needs upper > lower")
        if values.ndim != 1 or values.size < 2:
            raise BadParameters("tabulated density needs at least two values")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise BadParameters("tabulated values must be finite and nonnegative")
        grid = _grid(lower, upper, values)
    else:
        raise UnknownFamily(f"unknown density family {family!r}")
    if params:
        raise BadParameters(f"unexpected parameters for {family}: {sorted(params)}")
    return grid.normalized()


def sample_density(grid: DensityGrid, rng: np.random.Generator, size=None):
    """Inverse-CDF draws from the interpolant of ``grid``.

    Within a cell the density is linear, so the CDF is quadratic and is
    inverted in closed form.
    """
    cdf = grid.cdf()
    total = cdf[-1]
    u = rng.random(size) * total
    idx = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, grid.size - 2)
    v = grid.values
    h = grid.spacing
    r = u - cdf[idx]
    b = h * v[idx]
    a = 0.5 * h * (v[idx + 1] - v[idx])
    disc = np.sqrt(np.maximum(b * b + 4.0 * a * r, 0.0))
    denom = b + disc
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(denom > 0, 2.0 * r / denom, 0.0)
    out = grid.lower + h * (idx + np.clip(t, 0.0, 1.0))
    if size is None:
        return float(out)
    return out
