"""Disturbance sources for the diameter recursion and their parameter checks.

Three kinds of noise are supported:

* :class:`TriValuedNoise` -- delta_i in {-D_i, 0, +D_i}, each with probability 1/3;
* :class:`DensityNoise` -- delta_i drawn from a per-symbol density grid;
* :class:`TentNoise` -- delta_n = -eps / +eps depending on which half of [0, 1]
  the n-th tent-map iterate lies in (signs flipped for the merge variant).

Stochastic models expose ``draw(symbols, rng)`` taking 0-based symbol indices
and an explicit generator, so every path can own its own random stream.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence, Union

import numpy as np

from .density import DensityGrid, build_density, sample_density
from .errors import ValidationError
from .ifs import SystemDescriptor, as_fraction

__all__ = [
    "ConditionReport",
    "DensityNoise",
    "TentNoise",
    "TriValuedNoise",
    "build_density",
    "make_rng",
    "noise_bound",
    "sample_density",
    "sample_trivalued",
    "tent_delta",
    "validate_case1",
    "validate_tent",
]

COLLAPSE = "collapse"
MERGE = "merge"


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Counter-based generator for the stream identified by ``(seed, *key)``.

    Streams for different keys are statistically independent and do not
    depend on the order in which they are created.
    """
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(frozen=True)
class TriValuedNoise:
    exact_deltas: tuple[Fraction, ...]
    deltas: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        exact = tuple(as_fraction(d) for d in self.exact_deltas)
        for i, d in enumerate(exact, start=1):
            # zero amplitude is allowed as the noiseless limit
            if not 0 <= d < 1:
                raise ValidationError(f"amplitude delta {i} = {float(d)} is not in [0, 1)")
        if not exact:
            raise ValidationError("at least one amplitude is required")
        object.__setattr__(self, "exact_deltas", exact)
        object.__setattr__(self, "deltas", tuple(float(d) for d in exact))

    @classmethod
    def of(cls, deltas: Sequence) -> TriValuedNoise:
        return cls(tuple(deltas))

    @classmethod
    def uniform(cls, delta, symbol_count: int) -> TriValuedNoise:
        return cls((delta,) * symbol_count)

    @property
    def delta_max(self) -> float:
        return max(self.deltas)

    @property
    def delta_min(self) -> float:
        return min(self.deltas)

    def check(self, system: SystemDescriptor) -> TriValuedNoise:
        if len(self.deltas) != system.symbol_count:
            raise ValidationError(
                f"noise has {len(self.deltas)} amplitudes but the system has {system.symbol_count} maps"
            )
        return self

    def draw(self, symbols: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        amp = np.asarray(self.deltas)[symbols]
        return (rng.integers(0, 3, size=np.shape(symbols)) - 1) * amp


@dataclass(frozen=True, eq=False)
class DensityNoise:
    """One density grid per symbol."""

    grids: tuple[DensityGrid, ...]

    @classmethod
    def uniform(cls, grid: DensityGrid, symbol_count: int) -> DensityNoise:
        return cls((grid,) * symbol_count)

    def check(self, system: SystemDescriptor) -> DensityNoise:
        if len(self.grids) != system.symbol_count:
            raise ValidationError(
                f"noise has {len(self.grids)} densities but the system has {system.symbol_count} maps"
            )
        return self

    def draw(self, symbols: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        symbols = np.asarray(symbols)
        if all(g is self.grids[0] for g in self.grids):
            return sample_density(self.grids[0], rng, symbols.shape)
        # one uniform per entry keeps the stream layout independent of the symbols
        out = np.empty(symbols.shape)
        u_rng = rng.random(symbols.shape)
        for j, grid in enumerate(self.grids):
            mask = symbols == j
            if mask.any():
                out[mask] = sample_density(grid, _Replay(u_rng[mask]), int(mask.sum()))
        return out


class _Replay:
    """Hands pre-drawn uniforms to :func:`sample_density`."""

    def __init__(self, u):
        self._u = u

    def random(self, size=None):
        return self._u


@dataclass(frozen=True)
class TentNoise:
    epsilon: float
    x0: Fraction = Fraction(0)
    variant: str = COLLAPSE

    def __post_init__(self):
        eps = float(self.epsilon)
        if not 0 < eps < 1:
            raise ValidationError(f"epsilon = {eps} is not in (0, 1)")
        x0 = as_fraction(self.x0)
        if not 0 <= x0 <= 1:
            raise ValidationError(f"x0 = {x0} is not in [0, 1]")
        if self.variant not in (COLLAPSE, MERGE):
            raise ValidationError(f"variant must be 'collapse' or 'merge', got {self.variant!r}")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "x0", x0)

    @property
    def watches(self) -> str:
        return self.variant


NoiseModel = Union[TriValuedNoise, DensityNoise, TentNoise]


def sample_trivalued(noise: TriValuedNoise, symbol: int, rng: np.random.Generator) -> float:
    """One draw of delta for the 1-based ``symbol``."""
    amp = noise.deltas[symbol - 1]
    return float((int(rng.integers(0, 3)) - 1) * amp)


@dataclass(frozen=True)
class ConditionReport:
    holds: bool
    lhs: float
    rhs: float
    inequality: str

    def __bool__(self) -> bool:
        return self.holds

    def __str__(self) -> str:
        verdict = "holds" if self.holds else "FAILS"
        return f"{self.inequality}: {self.lhs:.12g} vs {self.rhs:.12g} ({verdict})"


CASE1_INEQUALITY = "xi_max <= delta_min / (2*delta_max + delta_min)"
TENT_INEQUALITY = "xi_max + epsilon / (1 - xi_max) < 1"


def validate_case1(system: SystemDescriptor, noise: TriValuedNoise) -> ConditionReport:
    """Check the amplitude condition under which a negative kick in the deep regime always collapses.

    Equality counts as holding.
    """
    noise.check(system)
    big, small = max(noise.exact_deltas), min(noise.exact_deltas)
    xi = max(system.exact_ratios)
    rhs = small / (2 * big + small) if small > 0 else Fraction(0)
    # rational comparison so the boundary case is decided exactly
    return ConditionReport(xi <= rhs, float(xi), float(rhs), CASE1_INEQUALITY)


def noise_bound(system: SystemDescriptor, noise: TriValuedNoise) -> float:
    """Largest possible |N| under tri-valued noise, xi*D/(1 - xi) with xi, D the maxima."""
    xi = system.xi_max
    return xi * noise.delta_max / (1.0 - xi)


def validate_tent(system: SystemDescriptor, noise: TentNoise) -> ConditionReport:
    xi = system.xi_max
    lhs = xi + noise.epsilon / (1.0 - xi)
    return ConditionReport(lhs < 1.0, lhs, 1.0, TENT_INEQUALITY)


def tent_delta(x, noise: TentNoise) -> float:
    """Kick assigned to tent-map position ``x``; x = 1/2 belongs to the upper half."""
    lower_half = x < Fraction(1, 2) if isinstance(x, Fraction) else x < 0.5
    sign = -1.0 if lower_half else 1.0
    if noise.variant == MERGE:
        sign = -sign
    return sign * noise.epsilon
