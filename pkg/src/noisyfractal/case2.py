"""Collapse distribution for noise with arbitrary densities.

The density of the noise term is propagated stage by stage:

    F_1 = density of ratio_1 * delta_1
    F_n = density of ratio_n * (N_{n-1} + delta_n)    (a convolution)
    LE_n = mass of F_n on (-inf, -product_n]
    NT_n = 1 - sum_{i<n} C_i,   C_n = NT_n * LE_n

Before the next convolution F_n is conditioned on survival: the part at or
below -product_n is cut off and the rest renormalized.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np
from scipy.signal import fftconvolve

from .case1 import DistributionTable
from .density import DEFAULT_RESOLUTION, DensityGrid
from .errors import BadParameters, DegenerateDensity, ResolutionOverflow, ValidationError
from .ifs import Address, SystemDescriptor
from .noise import DensityNoise

MAX_POINTS = 2**20
DIRECT_LIMIT = 2**20
MASS_TOL = 1e-6
MISMATCH_TOL = 1e-3
DEGENERATE = 1e-12


class CollapseMismatchWarning(UserWarning):
    """The collapse probability passed for renormalization disagrees with the removed mass."""


def scale_density(grid: DensityGrid, ratio: float) -> DensityGrid:
    """Density of ``ratio * X`` given the density of X."""
    if not 0 < ratio < 1:
        raise ValidationError(f"scaling ratio must be in (0, 1), got {ratio}")
    return DensityGrid(grid.lower * ratio, grid.spacing * ratio, grid.values / ratio)


def resample(grid: DensityGrid, spacing: float) -> DensityGrid:
    """Same density on spacing ``spacing`` starting at ``grid.lower``; mass is preserved."""
    if math.isclose(spacing, grid.spacing, rel_tol=1e-12):
        return grid
    count = int(math.ceil((grid.upper - grid.lower) / spacing - 1e-9)) + 1
    x = grid.lower + spacing * np.arange(count + 1)
    out = DensityGrid(grid.lower, spacing, grid(x))
    m = out.mass()
    if m > 0:
        out = DensityGrid(out.lower, spacing, out.values * (grid.mass() / m))
    return out


def _trapezoid_weights(values: np.ndarray) -> np.ndarray:
    w = values.copy()
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


def convolve(a: DensityGrid, b: DensityGrid, max_points: int = MAX_POINTS, method: str = "auto") -> DensityGrid:
    """Density of X + Y for independent X ~ a, Y ~ b.

    ``b`` is resampled onto ``a``'s spacing when they differ. The sum uses
    trapezoid weights, so the output mass is the product of the input masses up
    to O(h**2). ``method`` is ``"direct"``, ``"fft"`` or ``"auto"``.
    """
    h = a.spacing
    b = resample(b, h)
    size = a.size + b.size - 1
    if size > max_points:
        raise ResolutionOverflow(f"convolution needs {size} points, budget is {max_points}")
    wa, wb = _trapezoid_weights(a.values), _trapezoid_weights(b.values)
    if method == "auto":
        method = "direct" if a.size * b.size <= DIRECT_LIMIT else "fft"
    if method == "direct":
        values = np.convolve(wa, wb)
    elif method == "fft":
        values = np.clip(fftconvolve(wa, wb), 0.0, None)
    else:
        raise ValidationError(f"unknown convolution method {method!r}")
    return DensityGrid(a.lower + b.lower, h, h * values)


def tail_mass(grid: DensityGrid, cutoff: float) -> float:
    """Integral of the density over (-inf, cutoff]."""
    if cutoff <= grid.lower:
        return 0.0
    cdf = grid.cdf()
    if cutoff >= grid.upper:
        return float(cdf[-1])
    h = grid.spacing
    pos = (cutoff - grid.lower) / h
    i = min(int(pos), grid.size - 2)
    t = pos - i
    v0, v1 = grid.values[i], grid.values[i + 1]
    partial = h * (v0 * t + 0.5 * (v1 - v0) * t * t)
    return float(min(cdf[i] + partial, cdf[-1]))


def _trim(grid: DensityGrid) -> DensityGrid:
    nz = np.flatnonzero(grid.values)
    if nz.size == 0:
        return grid
    lo = max(nz[0] - 1, 0)
    hi = min(nz[-1] + 2, grid.size)
    if hi - lo < 2:
        hi = min(lo + 2, grid.size)
    return DensityGrid(grid.lower + lo * grid.spacing, grid.spacing, grid.values[lo:hi])


def truncate_renormalize(
    grid: DensityGrid,
    threshold: float,
    collapse_prob: float,
    correct_mass: bool = True,
) -> DensityGrid:
    """Zero the density for x <= ``threshold`` and divide by ``1 - collapse_prob``.

    A :class:`CollapseMismatchWarning` is issued when ``collapse_prob``
    differs from the mass actually removed by more than 1e-3. With
    ``correct_mass`` the remaining discretization drift is divided out so the
    result has unit mass.
    """
    if collapse_prob >= 1.0 - DEGENERATE:
        raise DegenerateDensity(f"collapse probability {collapse_prob} leaves no surviving mass")
    removed = tail_mass(grid, threshold)
    if abs(removed - collapse_prob) > MISMATCH_TOL:
        warnings.warn(
            f"collapse probability {collapse_prob:.6g} differs from the removed mass {removed:.6g}",
            CollapseMismatchWarning,
            stacklevel=2,
        )
    values = np.where(grid.x <= threshold, 0.0, grid.values) / (1.0 - collapse_prob)
    out = DensityGrid(grid.lower, grid.spacing, values)
    if correct_mass:
        m = out.mass()
        if not m > 0:
            raise DegenerateDensity("no mass left above the threshold")
        out = DensityGrid(out.lower, out.spacing, values / m)
    return _trim(out)


@dataclass
class PropagationState:
    """Stage-n result: F_n (before conditioning) and the running C/NT bookkeeping."""

    stage: int
    density: DensityGrid
    le: float
    nt: float
    c: float
    cumulative_collapse: float
    conditioned: Optional[DensityGrid] = field(default=None, repr=False)


def _support_spacing(system, grids, symbols, resolution):
    lo = hi = 0.0
    width = 0.0
    for j in symbols:
        r = system.ratio(j)
        g = grids[j - 1]
        lo, hi = r * (lo + g.lower), r * (hi + g.upper)
        width = max(width, hi - lo)
    return width / (resolution - 1)


def propagate(
    system: SystemDescriptor,
    noise,
    address: Address,
    max_stage: int,
    resolution: int = DEFAULT_RESOLUTION,
    max_points: int = MAX_POINTS,
    normalization: str = "conditional",
) -> Iterator[PropagationState]:
    """Yield one :class:`PropagationState` per stage 1..max_stage.

    ``normalization="conditional"`` divides the surviving part of F_n by
    1 - LE_n, making it the density of N_n given survival. ``"literal"``
    divides by 1 - C_n instead and skips the mass correction; from stage 2 on
    that density no longer has unit mass (a warning is issued).
    """
    grids = _grids(system, noise)
    if max_stage < 1:
        raise ValidationError(f"max_stage must be >= 1, got {max_stage}")
    if normalization not in ("conditional", "literal"):
        raise ValidationError(f"normalization must be 'conditional' or 'literal', got {normalization!r}")
    if resolution < 64:
        raise BadParameters(f"resolution must be >= 64, got {resolution}")
    address.check(system)
    if address.stage < max_stage:
        raise ValidationError(f"address {address} has {address.stage} symbols, need {max_stage}")
    symbols = address.symbols[:max_stage]
    h = _support_spacing(system, grids, symbols, resolution)

    prod = 1.0
    cumulative = 0.0
    conditioned = None
    for n, j in enumerate(symbols, start=1):
        r = system.ratio(j)
        prod *= r
        kick = scale_density(grids[j - 1], r)
        if conditioned is None:
            density = kick
        else:
            carried = resample(scale_density(conditioned, r), h)
            density = convolve(carried, resample(kick, h), max_points)
        mass = density.mass()
        le = min(1.0, tail_mass(density, -prod) / mass)
        nt = 1.0 - cumulative
        c = nt * le
        cumulative += c
        if n < max_stage:
            if normalization == "conditional":
                conditioned = truncate_renormalize(density.normalized(), -prod, le)
            else:
                conditioned = truncate_renormalize(density, -prod, c, correct_mass=False)
        yield PropagationState(n, density, le, nt, c, cumulative, conditioned)


def _grids(system, noise) -> Sequence[DensityGrid]:
    if isinstance(noise, DensityNoise):
        noise.check(system)
        return noise.grids
    grids = tuple(noise)
    DensityNoise(grids).check(system)
    return grids


@dataclass
class Case2Result:
    table: DistributionTable
    densities: list[DensityGrid]


def distribution_case2(
    system: SystemDescriptor,
    noise,
    address: Address,
    max_stage: int,
    resolution: int = DEFAULT_RESOLUTION,
    max_points: int = MAX_POINTS,
    normalization: str = "conditional",
    keep_densities: bool = False,
):
    """LE, NT and C per stage; with ``keep_densities`` also the F_n grids."""
    states = list(propagate(system, noise, address, max_stage, resolution, max_points, normalization))
    table = DistributionTable(
        address.prefix(max_stage),
        np.array([s.le for s in states]),
        np.array([s.nt for s in states]),
        np.array([s.c for s in states]),
    )
    if keep_densities:
        return Case2Result(table, [s.density for s in states])
    return table
