"""Noisy diameter recursion along paths and address trees.

Each step applies ``L <- ratio * (L + delta)`` and the same update to the noise
term N, so ``L = product + N`` holds at every stage. A generating set collapses
when its diameter is <= 0 and merges when N >= product.

Monte Carlo estimates split the trials into fixed-size blocks. Block ``b`` draws
from the stream ``make_rng(seed, b)``, so results do not depend on how many
worker threads process the blocks or in which order.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Optional

import numpy as np

from .errors import ValidationError
from .ifs import (
    DEFAULT_NODE_BUDGET,
    Address,
    AddressTree,
    GeneratingSetRecord,
    SystemDescriptor,
    check_tree_budget,
)
from .noise import COLLAPSE, MERGE, TentNoise, TriValuedNoise, make_rng, noise_bound, tent_delta

BLOCK_SIZE = 8192
COLLAPSED, MERGED, SURVIVED = "collapsed", "merged", "survived"


def worker_count(threads: Optional[int] = None) -> int:
    """Number of worker threads, capped by the NFL_THREADS environment variable."""
    n = threads if threads is not None else (os.cpu_count() or 1)
    cap = os.environ.get("NFL_THREADS")
    if cap:
        try:
            n = min(n, int(cap))
        except ValueError:
            raise ValidationError(f"NFL_THREADS must be an integer, got {cap!r}") from None
    return max(1, n)


@dataclass(frozen=True)
class AddressPolicy:
    """How the infinite address sequence j_1, j_2, ... is chosen.

    ``fixed`` repeats ``sequence`` periodically, ``cyclic`` runs 1, 2, ..., K, 1, ...
    and ``uniform`` draws each symbol independently and uniformly.
    """

    kind: str = "cyclic"
    sequence: tuple[int, ...] = ()

    def __post_init__(self):
        if self.kind not in ("fixed", "cyclic", "uniform"):
            raise ValidationError(f"unknown address policy {self.kind!r}")
        if self.kind == "fixed" and not self.sequence:
            raise ValidationError("a fixed address policy needs a non-empty sequence")
        object.__setattr__(self, "sequence", tuple(int(s) for s in self.sequence))

    @classmethod
    def fixed(cls, address) -> AddressPolicy:
        if isinstance(address, str):
            address = Address.parse(address)
        symbols = address.symbols if isinstance(address, Address) else tuple(address)
        return cls("fixed", symbols)

    @classmethod
    def parse(cls, text: str) -> AddressPolicy:
        """``"cyclic"``, ``"uniform"`` or ``"fixed:1.2.1"``."""
        kind, _, rest = text.partition(":")
        if kind == "fixed":
            return cls.fixed(Address.parse(rest))
        if rest:
            raise ValidationError(f"policy {kind!r} takes no argument")
        return cls(kind)

    def check(self, system: SystemDescriptor) -> AddressPolicy:
        if any(not 1 <= s <= system.symbol_count for s in self.sequence):
            raise ValidationError(f"address sequence uses symbols outside 1..{system.symbol_count}")
        return self

    def symbol_at(self, stage: int, symbol_count: int) -> Optional[int]:
        """0-based symbol for 1-based ``stage``; None for the random policy."""
        if self.kind == "fixed":
            return self.sequence[(stage - 1) % len(self.sequence)] - 1
        if self.kind == "cyclic":
            return (stage - 1) % symbol_count
        return None

    def draw(self, stage: int, n: int, symbol_count: int, rng: np.random.Generator) -> np.ndarray:
        j = self.symbol_at(stage, symbol_count)
        if j is None:
            return rng.integers(0, symbol_count, size=n)
        return np.full(n, j, dtype=np.int64)

    def __str__(self) -> str:
        if self.kind == "fixed":
            return "fixed:" + ".".join(map(str, self.sequence))
        return self.kind


@dataclass(frozen=True)
class PathState:
    stage: int = 0
    diameter: float = 1.0
    noise_term: float = 0.0
    product: float = 1.0
    address: Address = field(default_factory=Address)

    @property
    def collapsed(self) -> bool:
        # N < 0 is implied by L <= 0 in exact arithmetic; requiring it keeps an
        # underflowed noiseless diameter (L == +0.0, N == 0) alive
        return self.diameter <= 0.0 and self.noise_term < 0.0

    @property
    def merged(self) -> bool:
        return self.noise_term >= self.product and self.noise_term > 0.0


def step(state: PathState, ratio: float, delta: float, symbol: Optional[int] = None) -> PathState:
    """Advance one stage with contraction ``ratio`` and kick ``delta``."""
    address = state.address.child(symbol) if symbol is not None else state.address
    return PathState(
        stage=state.stage + 1,
        diameter=ratio * (state.diameter + delta),
        noise_term=ratio * (state.noise_term + delta),
        product=state.product * ratio,
        address=address,
    )


@dataclass
class TrajectoryOutcome:
    status: str
    terminal_stage: int
    final: PathState
    trace: Optional[list[PathState]] = None


def _tent_kicks(noise: TentNoise):
    x = noise.x0
    while True:
        x = 2 * x if x < Fraction(1, 2) else 2 * (1 - x)
        yield tent_delta(x, noise)


def run_path(
    system: SystemDescriptor,
    noise,
    policy: AddressPolicy,
    horizon: int,
    seed: int = 0,
    trace: bool = False,
    watch: Optional[str] = None,
) -> TrajectoryOutcome:
    """Iterate one lineage until it collapses (or merges) or reaches ``horizon``.

    ``watch`` selects the terminating event: ``"collapse"`` (default),
    ``"merge"`` (default for merge-directed tent noise) or ``"both"``.
    """
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    policy.check(system)
    if not isinstance(noise, TentNoise):
        noise.check(system)
    if watch is None:
        watch = noise.watches if isinstance(noise, TentNoise) else COLLAPSE
    if watch not in (COLLAPSE, MERGE, "both"):
        raise ValidationError(f"watch must be 'collapse', 'merge' or 'both', got {watch!r}")

    rng = make_rng(seed)
    kicks = _tent_kicks(noise) if isinstance(noise, TentNoise) else None
    state = PathState()
    states = [state] if trace else None
    # extending the address each stage is quadratic; without a trace it is built once at the end
    symbols = []
    K = system.symbol_count
    status, n = SURVIVED, horizon
    for stage in range(1, horizon + 1):
        j = int(policy.draw(stage, 1, K, rng)[0])
        if kicks is not None:
            delta = next(kicks)
        else:
            delta = float(noise.draw(np.array([j]), rng)[0])
        state = step(state, system.ratios[j], delta, j + 1 if trace else None)
        symbols.append(j + 1)
        if trace:
            states.append(state)
        if watch != MERGE and state.collapsed:
            status, n = COLLAPSED, stage
            break
        if watch != COLLAPSE and state.merged:
            status, n = MERGED, stage
            break
    if not trace:
        state = replace(state, address=Address(tuple(symbols)))
    return TrajectoryOutcome(status, n, state, states)


@dataclass
class EmpiricalDistribution:
    """Per-stage counts of first collapses among ``trials`` simulated paths."""

    collapses: np.ndarray
    at_risk: np.ndarray
    trials: int
    horizon: int
    max_abs_noise: float = 0.0

    @property
    def stages(self) -> np.ndarray:
        return np.arange(1, self.horizon + 1)

    @property
    def estimates(self) -> np.ndarray:
        return self.collapses / self.trials

    @property
    def stderr(self) -> np.ndarray:
        c = self.estimates
        return np.sqrt(c * (1.0 - c) / self.trials)

    @property
    def conditional(self) -> np.ndarray:
        """Collapse fraction among paths alive at the start of each stage."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(self.at_risk > 0, self.collapses / np.maximum(self.at_risk, 1), np.nan)

    @property
    def conditional_stderr(self) -> np.ndarray:
        p = self.conditional
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.sqrt(p * (1.0 - p) / self.at_risk)

    @property
    def survived(self) -> int:
        return self.trials - int(self.collapses.sum())


def _simulate_block(system, noise, policy, horizon, seed, block, n):
    rng = make_rng(seed, block)
    K = system.symbol_count
    ratios = np.asarray(system.ratios)
    collapses = np.zeros(horizon, dtype=np.int64)
    at_risk = np.zeros(horizon, dtype=np.int64)
    L = np.ones(n)
    N = np.zeros(n)
    max_abs = 0.0
    for t in range(horizon):
        m = L.size
        if m == 0:
            break
        at_risk[t] = m
        symbols = policy.draw(t + 1, m, K, rng)
        delta = noise.draw(symbols, rng)
        r = ratios[symbols]
        L = r * (L + delta)
        N = r * (N + delta)
        max_abs = max(max_abs, float(np.abs(N).max()))
        dead = (L <= 0.0) & (N < 0.0)
        k = int(dead.sum())
        if k:
            collapses[t] = k
            keep = ~dead
            L, N = L[keep], N[keep]
    return collapses, at_risk, max_abs


def monte_carlo_distribution(
    system: SystemDescriptor,
    noise,
    policy: AddressPolicy,
    trials: int,
    horizon: int,
    seed: int = 0,
    threads: Optional[int] = None,
    block_size: int = BLOCK_SIZE,
) -> EmpiricalDistribution:
    """Estimate the probability of first collapse at each stage 1..horizon."""
    if trials < 1:
        raise ValidationError(f"trials must be >= 1, got {trials}")
    if horizon < 1:
        raise ValidationError(f"horizon must be >= 1, got {horizon}")
    if isinstance(noise, TentNoise):
        raise ValidationError("tent noise is deterministic; use the chaos runner instead")
    noise.check(system)
    policy.check(system)
    sizes = [min(block_size, trials - start) for start in range(0, trials, block_size)]
    jobs = [(system, noise, policy, horizon, seed, b, n) for b, n in enumerate(sizes)]
    workers = min(worker_count(threads), len(jobs))
    if workers == 1:
        results = [_simulate_block(*job) for job in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda job: _simulate_block(*job), jobs))
    collapses = sum(r[0] for r in results)
    at_risk = sum(r[1] for r in results)
    max_abs = max(r[2] for r in results)
    return EmpiricalDistribution(collapses, at_risk, trials, horizon, max_abs)


def run_tree(
    system: SystemDescriptor,
    noise,
    depth: int,
    seed: int = 0,
    node_budget: int = DEFAULT_NODE_BUDGET,
) -> AddressTree:
    """Grow the full address tree with independent kicks on every branch.

    A collapsed node is recorded with its (nonpositive) diameter and gets no
    children; its siblings are unaffected. With tent noise every node of
    stage n receives the kick of the n-th tent iterate.
    """
    check_tree_budget(system.symbol_count, depth, node_budget)
    if isinstance(noise, TentNoise):
        if noise.variant != COLLAPSE:
            raise ValidationError("trees track collapse only; use the collapse-directed tent variant")
        kicks = _tent_kicks(noise)
    else:
        noise.check(system)
        kicks = None
    rng = make_rng(seed)
    K = system.symbol_count
    ratios = np.asarray(system.ratios)
    root = Address()
    records = {root: GeneratingSetRecord(root, 1.0)}
    parents = [root]
    L = np.ones(1)
    N = np.zeros(1)
    for _ in range(depth):
        if not parents:
            break
        symbols = np.tile(np.arange(K), len(parents))
        if kicks is not None:
            delta = np.full(symbols.size, next(kicks))
        else:
            delta = noise.draw(symbols, rng)
        r = ratios[symbols]
        L = r * (np.repeat(L, K) + delta)
        N = r * (np.repeat(N, K) + delta)
        dead = (L <= 0.0) & (N < 0.0)
        children = [p.child(j) for p in parents for j in range(1, K + 1)]
        for addr, diam, d in zip(children, L.tolist(), dead.tolist()):
            records[addr] = GeneratingSetRecord(addr, diam, d)
        keep = ~dead
        parents = [a for a, k in zip(children, keep.tolist()) if k]
        L, N = L[keep], N[keep]
    return AddressTree(depth, K, records)


def noise_bound_check(
    trace: list[PathState], system: SystemDescriptor, noise: TriValuedNoise, atol: float = 1e-12
) -> bool:
    """True iff every noise term of ``trace`` lies in [-bound, bound] (up to ``atol``)."""
    bound = noise_bound(system, noise) + atol
    return all(abs(s.noise_term) <= bound for s in trace)


def decomposition_error(state: PathState) -> float:
    """|L - (product + N)|, zero up to rounding."""
    return abs(state.diameter - (state.product + state.noise_term))


__all__ = [
    "AddressPolicy",
    "EmpiricalDistribution",
    "PathState",
    "TrajectoryOutcome",
    "decomposition_error",
    "monte_carlo_distribution",
    "noise_bound",
    "noise_bound_check",
    "run_path",
    "run_tree",
    "step",
    "worker_count",
]
