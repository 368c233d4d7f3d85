"""Truncation of the construction under tent-map kicks.

The kick at stage n is -eps when the n-th tent iterate x_n is below 1/2 and
+eps otherwise. Once the orbit enters (0, a) with a = 2**-(n0 + 1), the next
n0 iterates all stay below 1/2, and n0 consecutive negative kicks are enough
to collapse any surviving set. So a collapse happens no later than k + n0,
where k is the first index with x_k in (0, a).

Tent iterates are kept as exact rationals. In binary floating point every
doubling discards a mantissa bit, so float orbits reach 0 within about 1075
steps regardless of the starting point.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .errors import ChaosConditionViolated, InvalidState, MaxStageExceeded, ValidationError
from .ifs import SystemDescriptor, as_fraction
from .noise import COLLAPSE, MERGE, TENT_INEQUALITY, TentNoise, make_rng, tent_delta, validate_tent
from .simulate import AddressPolicy, PathState, step

HALF = Fraction(1, 2)
INTEGER_GUARD = 1e-12
DEFAULT_MAX_STAGE = 10**4


@dataclass(frozen=True)
class TentState:
    x: Fraction
    iterate_index: int = 0


def tent_map(x):
    """x -> 2x for x < 1/2, 2(1 - x) otherwise. Exact for Fractions."""
    return 2 * x if x < HALF else 2 * (1 - x)


def tent_step(state: TentState) -> TentState:
    if not 0 <= state.x <= 1:
        raise ValidationError(f"tent state {state.x} is outside [0, 1]")
    return TentState(tent_map(state.x), state.iterate_index + 1)


def tent_orbit(x0, steps: int) -> list[Fraction]:
    x = as_fraction(x0)
    orbit = [x]
    for _ in range(steps):
        x = tent_map(x)
        orbit.append(x)
    return orbit


def _floor_plus_one(value: float) -> int:
    # a value within the guard of an integer m is taken as exactly m, which
    # keeps the strict inequality behind "[v] + 1" sufficient
    m = round(value)
    base = m if abs(value - m) < INTEGER_GUARD else math.floor(value)
    return int(base) + 1


@dataclass(frozen=True)
class TruncationBounds:
    n0: int
    a: Fraction
    condition_ok: bool = True


def compute_n0(xi_max: float, epsilon: float, strict: bool = True) -> TruncationBounds:
    """Window length n0 = [log(1 + (1/xi - 1)/eps) / log(1/xi)] + 1 and a = 2**-(n0+1).

    The truncation argument needs xi + eps/(1 - xi) < 1. With ``strict`` a
    violation raises; otherwise the bounds come back with ``condition_ok=False``.
    """
    if not 0 < xi_max < 1 or not 0 < epsilon < 1:
        raise ValidationError("need 0 < xi_max < 1 and 0 < epsilon < 1")
    lhs = xi_max + epsilon / (1.0 - xi_max)
    ok = lhs < 1.0
    if strict and not ok:
        raise ChaosConditionViolated(f"{TENT_INEQUALITY} fails: {lhs:.12g} >= 1", TENT_INEQUALITY)
    ratio = math.log1p((1.0 / xi_max - 1.0) / epsilon) / math.log(1.0 / xi_max)
    n0 = _floor_plus_one(ratio)
    return TruncationBounds(n0, Fraction(1, 2 ** (n0 + 1)), ok)


def compute_l(prod_k: float, n_k: float, xi_max: float, epsilon: float) -> int:
    """Negative kicks needed after stage k to collapse a set with product prod_k and noise n_k."""
    s = prod_k + n_k
    if not 0 < s < 1:
        raise InvalidState(f"product + noise = {s!r} is outside (0, 1)")
    ratio = math.log1p((1.0 / xi_max - 1.0) / epsilon * s) / math.log(1.0 / xi_max)
    return _floor_plus_one(ratio)


@dataclass
class TruncationReport:
    """Outcome of one coupled run.

    ``collapse_stage`` is the stage of the watched event (a merge for the
    merge-directed variant); ``hit_stage`` is k, or None if the orbit never
    entered (0, a) before the run ended or cycled.
    """

    x0: Fraction
    n0: int
    hit_stage: Optional[int]
    collapse_stage: Optional[int]
    event: str = COLLAPSE
    stages_run: int = 0
    orbit_cycled: bool = False
    trace: Optional[list] = field(default=None, repr=False)

    @property
    def l_used(self) -> Optional[int]:
        if self.hit_stage is None or self.collapse_stage is None:
            return None
        return self.collapse_stage - self.hit_stage

    @property
    def bound_satisfied(self) -> Optional[bool]:
        """event stage <= k + n0, reading a missing k as infinity.

        None when neither a hit nor an event was observed.
        """
        if self.hit_stage is None:
            return True if self.collapse_stage is not None else None
        return self.collapse_stage is not None and self.collapse_stage <= self.hit_stage + self.n0

    def row(self) -> dict:
        return {
            "x0": str(self.x0),
            "k": self.hit_stage,
            "collapse_stage": self.collapse_stage,
            "n0": self.n0,
            "bound_satisfied": self.bound_satisfied,
        }


def _in_window(x: Fraction, a: Fraction) -> bool:
    return 0 < x < a


def run_until_truncation(
    system: SystemDescriptor,
    noise: TentNoise,
    policy: Optional[AddressPolicy] = None,
    max_stage: int = DEFAULT_MAX_STAGE,
    seed: int = 0,
    trace: bool = False,
) -> TruncationReport:
    """Couple the tent orbit with the diameter recursion and record k and the event stage.

    The diameters stop at the watched event; the orbit keeps going until k is
    known or the orbit is seen to cycle, so k is reported even when the
    event came first. Stage n uses the n-th iterate x_n (x_0 only seeds).
    """
    report = validate_tent(system, noise)
    if not report:
        raise ChaosConditionViolated(f"{report}", TENT_INEQUALITY)
    policy = (policy or AddressPolicy()).check(system)
    bounds = compute_n0(system.xi_max, noise.epsilon)
    a = bounds.a
    rng = make_rng(seed)
    K = system.symbol_count

    x = noise.x0
    k = 0 if _in_window(x, a) else None
    event = None
    state = PathState()
    states = [state] if trace else None
    # Brent-style cycle detection on the exact orbit
    checkpoint, power, cycled = x, 1, False
    n = 0
    while n < max_stage:
        if event is not None and (k is not None or cycled):
            break
        n += 1
        x = tent_map(x)
        if k is None and _in_window(x, a):
            k = n
        if event is None:
            j = int(policy.draw(n, 1, K, rng)[0])
            state = step(state, system.ratios[j], tent_delta(x, noise), j + 1 if trace else None)
            if trace:
                states.append(state)
            hit = state.merged if noise.variant == MERGE else state.collapsed
            if hit:
                event = n
        if not cycled:
            if x == checkpoint:
                cycled = True
            elif n == power:
                checkpoint, power = x, 2 * power
    out = TruncationReport(noise.x0, bounds.n0, k, event, noise.variant, n, cycled, states)
    if k is not None and event is None and k + bounds.n0 > max_stage:
        raise MaxStageExceeded(
            f"x0={noise.x0}: orbit hit (0, a) at k={k} but max_stage={max_stage} ends before k + n0"
        )
    return out


def sweep_truncation(
    system: SystemDescriptor,
    epsilon: float,
    x0s: Sequence,
    variant: str = COLLAPSE,
    policy: Optional[AddressPolicy] = None,
    max_stage: int = DEFAULT_MAX_STAGE,
) -> list[TruncationReport]:
    """:func:`run_until_truncation` for many starting points at once.

    Orbits are iterated on integer numerators over a fixed denominator, so
    they stay exact. Only deterministic address policies are supported.
    Results are identical to the one-at-a-time runner.
    """
    probe = TentNoise(epsilon, 0, variant)
    report = validate_tent(system, probe)
    if not report:
        raise ChaosConditionViolated(f"{report}", TENT_INEQUALITY)
    policy = (policy or AddressPolicy()).check(system)
    if policy.kind == "uniform":
        raise ValidationError("sweeps need a deterministic address policy (fixed or cyclic)")
    bounds = compute_n0(system.xi_max, epsilon)
    fracs = [as_fraction(x) for x in x0s]
    for f in fracs:
        if not 0 <= f <= 1:
            raise ValidationError(f"x0 = {f} is outside [0, 1]")
    if not fracs:
        return []
    if max(f.denominator for f in fracs) >= 2**60:
        raise ValidationError("x0 denominators must be below 2**60 for the vectorized sweep")
    m = len(fracs)
    p = np.array([f.numerator for f in fracs], dtype=np.int64)
    q = np.array([f.denominator for f in fracs], dtype=np.int64)
    scale = 2 ** (bounds.n0 + 1)
    sign = -1.0 if variant == MERGE else 1.0
    eps = float(probe.epsilon)

    def in_window(pp, qq):
        return (pp > 0) & (pp * scale < qq)

    k = np.where(in_window(p, q), 0, -1)
    event = np.full(m, -1)
    stages_run = np.zeros(m, dtype=np.int64)
    cycled = np.zeros(m, dtype=bool)
    L = np.ones(m)
    N = np.zeros(m)
    prod = 1.0
    checkpoint = p.copy()
    power = 1
    idx = np.arange(m)
    for n in range(1, max_stage + 1):
        done = (event[idx] >= 0) & ((k[idx] >= 0) | cycled[idx])
        if done.all():
            break
        if done.any():
            keep = ~done
            idx, p, q, L, N, checkpoint = idx[keep], p[keep], q[keep], L[keep], N[keep], checkpoint[keep]
        stages_run[idx] = n
        p = np.where(2 * p < q, 2 * p, 2 * (q - p))
        newly = (k[idx] < 0) & in_window(p, q)
        k[idx[newly]] = n
        r = system.ratios[policy.symbol_at(n, system.symbol_count)]
        prod *= r
        live = event[idx] < 0
        delta = np.where(2 * p < q, -eps, eps) * sign
        L = np.where(live, r * (L + delta), L)
        N = np.where(live, r * (N + delta), N)
        if variant == MERGE:
            hit = live & (N >= prod) & (N > 0.0)
        else:
            hit = live & (L <= 0.0) & (N < 0.0)
        event[idx[hit]] = n
        not_cycled = ~cycled[idx]
        cycled[idx[not_cycled & (p == checkpoint)]] = True
        if n == power:
            checkpoint = p.copy()
            power *= 2

    undecided = (k >= 0) & (event < 0) & (k + bounds.n0 > max_stage)
    if undecided.any():
        bad = ", ".join(str(fracs[i]) for i in np.flatnonzero(undecided)[:5])
        raise MaxStageExceeded(f"max_stage={max_stage} ends before k + n0 for x0 in [{bad}, ...]")
    reports = []
    for i, f in enumerate(fracs):
        rep = TruncationReport(
            f,
            bounds.n0,
            int(k[i]) if k[i] >= 0 else None,
            int(event[i]) if event[i] >= 0 else None,
            variant,
            int(stages_run[i]),
            bool(cycled[i]),
        )
        reports.append(rep)
    return reports


def rationals_up_to(max_denominator: int) -> list[Fraction]:
    """All reduced p/q in (0, 1) with q <= max_denominator, in increasing order."""
    seen = {Fraction(p, q) for q in range(2, max_denominator + 1) for p in range(1, q) if math.gcd(p, q) == 1}
    return sorted(seen)


@dataclass
class TruncationSummary:
    total: int
    hits: int
    no_hit: int
    truncated: int
    within_bound: int
    violators: list[TruncationReport]

    @property
    def all_truncated(self) -> bool:
        return self.truncated == self.hits

    @property
    def all_within_bound(self) -> bool:
        return self.within_bound == self.hits

    @property
    def passed(self) -> bool:
        return not self.violators


def verify_truncation_bound(reports: Iterable[TruncationReport]) -> TruncationSummary:
    """Check that every run whose orbit entered (0, a) truncated by k + n0.

    Runs that never entered the window are counted in ``no_hit`` and left out.
    """
    reports = list(reports)
    hits = [r for r in reports if r.hit_stage is not None]
    violators = [r for r in hits if not r.bound_satisfied]
    truncated = sum(r.collapse_stage is not None for r in hits)
    return TruncationSummary(
        total=len(reports),
        hits=len(hits),
        no_hit=len(reports) - len(hits),
        truncated=truncated,
        within_bound=len(hits) - len(violators),
        violators=violators,
    )


@dataclass
class GeneralizedConditionReport:
    constant_negative: bool
    kick_value: Optional[float]
    orbits_enter: bool
    entered: int
    orbits: int
    window_ok: bool
    window: int
    notes: list[str] = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return self.constant_negative and self.orbits_enter and self.window_ok


def check_generalized_conditions(
    map_fn: Callable,
    delta_rule: Callable,
    interval: tuple,
    sample_count: int = 1000,
    window: int = 1,
    max_stage: int = DEFAULT_MAX_STAGE,
    orbit_starts: Optional[Sequence] = None,
    orbit_count: int = 64,
    seed: int = 0,
) -> GeneralizedConditionReport:
    """Empirical checks of the hypotheses for truncation under an arbitrary map.

    (i) ``delta_rule`` gives one and the same negative kick on a dense sample
    of the interval; (ii) sampled orbits enter the interval within
    ``max_stage`` iterations, a proxy for ergodicity; (iii) from every sampled
    point the next ``window`` iterates still receive a negative kick. These
    are sampled checks, not proofs.

    Points are Fractions, so the map should accept them. Default orbit starts
    are random rationals over 3**38; 2 is a primitive root modulo powers of 3,
    so tent orbits of these points are long instead of short cycles.
    """
    lo, hi = as_fraction(interval[0]), as_fraction(interval[1])
    if not 0 <= lo < hi <= 1:
        raise ValidationError("interval must satisfy 0 <= lo < hi <= 1")
    if sample_count < 1:
        raise ValidationError("sample_count must be >= 1")
    width = hi - lo
    points = [lo + width * Fraction(2 * i + 1, 2 * sample_count) for i in range(sample_count)]

    kicks = {float(delta_rule(x)) for x in points}
    constant_negative = len(kicks) == 1 and next(iter(kicks)) < 0
    kick_value = next(iter(kicks)) if len(kicks) == 1 else None

    if orbit_starts is None:
        rng = make_rng(seed)
        q = 3**38
        orbit_starts = [Fraction(int(v), q) for v in rng.integers(1, q, size=orbit_count)]
    entered = 0
    for x0 in orbit_starts:
        x = as_fraction(x0)
        for _ in range(max_stage + 1):
            if lo < x < hi:
                entered += 1
                break
            x = map_fn(x)
    starts = list(orbit_starts)

    window_ok = True
    for x in points:
        y = x
        for _ in range(window):
            y = map_fn(y)
            if not float(delta_rule(y)) < 0:
                window_ok = False
                break
        if not window_ok:
            break

    notes = []
    if not constant_negative:
        notes.append(f"kick values on the interval: {sorted(kicks)}")
    if entered < len(starts):
        notes.append(f"{len(starts) - entered} of {len(starts)} orbits did not enter within {max_stage} steps")
    return GeneralizedConditionReport(
        constant_negative, kick_value, entered == len(starts), entered, len(starts), window_ok, window, notes
    )
