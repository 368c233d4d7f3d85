"""Collapse distribution for tri-valued noise along a fixed address.

The analytic table classifies each stage by comparing the noiseless products
with the noise bound B = xi*D/(1 - xi):

* ``no-collapse``  -- product_n > B, the noise can never reach -product_n;
* ``transitional`` -- product_{n-1} > B >= product_n, LE from the proportional
  length approximation (xi*D - (1 - xi)*product_n) / (2*xi*D);
* ``deep``         -- product_{n-1} <= B, LE = 1/3 (requires the amplitude
  condition, see :func:`noisyfractal.noise.validate_case1`).

NT_n = 1 - sum_{i<n} C_i and C_n = NT_n * LE_n.

:func:`exact_enumeration` is the brute-force ground truth: it walks all 3**n
equiprobable kick sequences in exact integer arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import BudgetExceeded, Case1ConditionViolated, ValidationError
from .ifs import Address, SystemDescriptor
from .noise import CASE1_INEQUALITY, TriValuedNoise, noise_bound, validate_case1

NO_COLLAPSE = "no-collapse"
TRANSITIONAL = "transitional"
DEEP = "deep"

MAX_ENUMERATION_STAGE = 14


@dataclass
class DistributionTable:
    """Per-stage LE, NT, C (and GE, which mirrors LE) along ``address``."""

    address: Address
    le: np.ndarray
    nt: np.ndarray
    c: np.ndarray
    regimes: Optional[list[str]] = None
    exact: Optional[list[tuple[Fraction, Fraction, Fraction]]] = None

    @property
    def ge(self) -> np.ndarray:
        return self.le

    @property
    def stages(self) -> np.ndarray:
        return np.arange(1, len(self.c) + 1)

    @property
    def max_stage(self) -> int:
        return len(self.c)

    def rows(self) -> list[dict]:
        out = []
        for i in range(self.max_stage):
            row = {
                "stage": i + 1,
                "LE": float(self.le[i]),
                "NT": float(self.nt[i]),
                "C": float(self.c[i]),
                "GE": float(self.le[i]),
            }
            if self.regimes is not None:
                row["regime"] = self.regimes[i]
            out.append(row)
        return out


def _address_for(system: SystemDescriptor, address: Address, max_stage: int) -> Address:
    address.check(system)
    if address.stage < max_stage:
        raise ValidationError(f"address {address} has {address.stage} symbols, need {max_stage}")
    return address


def _products(system: SystemDescriptor, address: Address, max_stage: int) -> list[float]:
    prods = [1.0]
    for j in address.symbols[:max_stage]:
        prods.append(prods[-1] * system.ratio(j))
    return prods


def regime_of(prod_prev: float, prod: float, bound: float) -> str:
    if prod > bound:
        return NO_COLLAPSE
    if prod_prev > bound:
        return TRANSITIONAL
    return DEEP


def _deep_guard(system, noise):
    report = validate_case1(system, noise)
    if not report:
        raise Case1ConditionViolated(
            f"deep regime reached but {report}; no analytic LE is available",
            CASE1_INEQUALITY,
        )


def classify_regime(system: SystemDescriptor, noise: TriValuedNoise, address: Address, stage: int) -> str:
    if stage < 1:
        raise ValidationError(f"stage must be >= 1, got {stage}")
    noise.check(system)
    prods = _products(system, _address_for(system, address, stage), stage)
    regime = regime_of(prods[stage - 1], prods[stage], noise_bound(system, noise))
    if regime == DEEP:
        _deep_guard(system, noise)
    return regime


def _le(regime: str, prod: float, xi: float, delta: float) -> float:
    if regime == NO_COLLAPSE:
        return 0.0
    if regime == TRANSITIONAL:
        value = (xi * delta - (1.0 - xi) * prod) / (2.0 * xi * delta)
        return min(1.0, max(0.0, value))
    return 1.0 / 3.0


def le_case1(system: SystemDescriptor, noise: TriValuedNoise, address: Address, stage: int) -> float:
    regime = classify_regime(system, noise, address, stage)
    prod = _products(system, address, stage)[stage]
    return _le(regime, prod, system.xi_max, noise.delta_max)


def distribution_case1(
    system: SystemDescriptor, noise: TriValuedNoise, address: Address, max_stage: int
) -> DistributionTable:
    if max_stage < 1:
        raise ValidationError(f"max_stage must be >= 1, got {max_stage}")
    noise.check(system)
    prods = _products(system, _address_for(system, address, max_stage), max_stage)
    bound = noise_bound(system, noise)
    xi, delta = system.xi_max, noise.delta_max
    regimes, le, nt, c = [], [], [], []
    cumulative = 0.0
    for n in range(1, max_stage + 1):
        regime = regime_of(prods[n - 1], prods[n], bound)
        if regime == DEEP:
            _deep_guard(system, noise)
        le_n = _le(regime, prods[n], xi, delta)
        nt_n = 1.0 - cumulative
        c_n = nt_n * le_n
        cumulative += c_n
        regimes.append(regime)
        le.append(le_n)
        nt.append(nt_n)
        c.append(c_n)
    return DistributionTable(address.prefix(max_stage), np.array(le), np.array(nt), np.array(c), regimes)


def exact_enumeration(
    system: SystemDescriptor,
    noise: TriValuedNoise,
    address: Address,
    max_stage: int,
    stage_budget: int = MAX_ENUMERATION_STAGE,
) -> DistributionTable:
    """Exact first-collapse probabilities over all 3**n kick sequences.

    With ratio_n = p_n/q_n and amplitudes scaled by the common denominator d,
    the integer M_n = L_n * d * q_1...q_n obeys
    M_n = p_n * (M_{n-1} + e * q_1...q_{n-1}),  e in {-E_n, 0, E_n},
    and the set collapses iff M_n <= 0. Equal states are merged with
    multiplicities, so the count stays exact.
    """
    if max_stage < 1:
        raise ValidationError(f"max_stage must be >= 1, got {max_stage}")
    if max_stage > stage_budget:
        raise BudgetExceeded(f"enumeration of 3**{max_stage} sequences exceeds the stage budget {stage_budget}")
    noise.check(system)
    symbols = _address_for(system, address, max_stage).symbols[:max_stage]
    ratios = [system.exact_ratios[j - 1] for j in symbols]
    amps = [noise.exact_deltas[j - 1] for j in symbols]
    d = math.lcm(*(a.denominator for a in amps))
    kicks = [int(a * d) for a in amps]

    # magnitude bound decides between int64 and Python ints
    bound, q_prev = d, 1
    for r, e in zip(ratios, kicks):
        bound = r.numerator * (bound + e * q_prev)
        q_prev *= r.denominator
    dtype = np.int64 if bound < 2**62 else object

    values = np.array([d], dtype=dtype)
    weights = np.array([1], dtype=np.int64)
    q_prev = 1
    bound_f = noise_bound(system, noise)
    prods = _products(system, address, max_stage)
    le, nt, c, exact, regimes = [], [], [], [], []
    cumulative = Fraction(0)
    for n, (r, e) in enumerate(zip(ratios, kicks), start=1):
        steps = np.array([-e, 0, e], dtype=dtype) * (q_prev if dtype is object else np.int64(q_prev))
        children = ((values[:, None] + steps[None, :]) * r.numerator).ravel()
        child_w = np.repeat(weights, 3)
        dead = children <= 0
        collapsed_w = int(child_w[dead].sum()) if dead.any() else 0
        at_risk_w = int(weights.sum())
        values, weights = children[~dead], child_w[~dead]
        if dtype is not object and values.size:
            values, inverse = np.unique(values, return_inverse=True)
            weights = np.bincount(inverse, weights=weights, minlength=values.size).astype(np.int64)
        q_prev *= r.denominator

        c_n = Fraction(collapsed_w, 3**n)
        le_n = Fraction(collapsed_w, 3 * at_risk_w) if at_risk_w else Fraction(0)
        nt_n = 1 - cumulative
        cumulative += c_n
        exact.append((le_n, nt_n, c_n))
        le.append(float(le_n))
        nt.append(float(nt_n))
        c.append(float(c_n))
        regimes.append(regime_of(prods[n - 1], prods[n], bound_f))
    return DistributionTable(address.prefix(max_stage), np.array(le), np.array(nt), np.array(c), regimes, exact)
