"""Self-similar systems described by their contraction ratios.

Only the ratios matter for the diameter dynamics, so a system is a list of
ratios in (0, 1). Generating sets are indexed by addresses ``(j_1, ..., j_n)``
with 1-based symbols; the root set E_0 has the empty address and diameter 1.

The images S_j(E_0) are assumed to have disjoint interiors. Ratios alone
cannot confirm that, so it is not checked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Sequence

from .errors import DepthTooLarge, RatioOutOfRange, ToleranceNotMet, TooFewMaps, ValidationError

DEFAULT_NODE_BUDGET = 2**21


def as_fraction(value) -> Fraction:
    """Exact rational for a number or a ``"p/q"`` / decimal string.

    Floats are read through their shortest repr, so ``0.1`` becomes ``1/10``
    and ``float(as_fraction(x)) == x`` for every finite float ``x``.
    """
    if isinstance(value, bool):
        raise ValidationError(f"expected a number, got {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValidationError(f"expected a finite number, got {value!r}")
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValidationError(f"cannot parse {value!r} as a rational number") from exc
    raise ValidationError(f"expected a number, got {type(value).__name__}")


@dataclass(frozen=True)
class SystemDescriptor:
    """K contraction ratios of the similarities S_1..S_K.

    ``ratios`` are the floats used by simulations, ``exact_ratios`` the
    rationals they were parsed from (used by the enumeration oracle).
    """

    exact_ratios: tuple[Fraction, ...]
    ratios: tuple[float, ...] = field(init=False)
    xi_max: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "ratios", tuple(float(r) for r in self.exact_ratios))
        object.__setattr__(self, "xi_max", max(self.ratios))

    @property
    def symbol_count(self) -> int:
        return len(self.ratios)

    @property
    def is_uniform(self) -> bool:
        return len(set(self.exact_ratios)) == 1

    def ratio(self, symbol: int) -> float:
        """Ratio of the 1-based ``symbol``."""
        return self.ratios[symbol - 1]


def validate_system(ratios: Iterable) -> SystemDescriptor:
    exact = tuple(as_fraction(r) for r in ratios)
    if len(exact) < 2:
        raise TooFewMaps(f"need at least 2 contraction ratios, got {len(exact)}")
    for i, r in enumerate(exact, start=1):
        if not 0 < r < 1:
            raise RatioOutOfRange(f"ratio {i} = {float(r)!r} is not in the open interval (0, 1)")
    return SystemDescriptor(exact)


@dataclass(frozen=True, order=True)
class Address:
    """Finite index string (j_1, ..., j_n) of a generating set."""

    symbols: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "symbols", tuple(int(s) for s in self.symbols))
        if any(s < 1 for s in self.symbols):
            raise ValidationError(f"address symbols are 1-based, got {self.symbols}")

    @property
    def stage(self) -> int:
        return len(self.symbols)

    def child(self, symbol: int) -> Address:
        return Address(self.symbols + (symbol,))

    def prefix(self, n: int) -> Address:
        return Address(self.symbols[:n])

    def check(self, system: SystemDescriptor) -> Address:
        bad = [s for s in self.symbols if s > system.symbol_count]
        if bad:
            raise ValidationError(
                f"address {self} uses symbol {bad[0]} but the system has {system.symbol_count} maps"
            )
        return self

    @classmethod
    def parse(cls, text: str) -> Address:
        text = text.strip()
        if not text:
            return cls(())
        try:
            return cls(tuple(int(part) for part in text.split(".")))
        except ValueError as exc:
            raise ValidationError(f"malformed address {text!r}; expected e.g. '1.2.1'") from exc

    def __str__(self) -> str:
        return ".".join(str(s) for s in self.symbols)


@dataclass(frozen=True)
class GeneratingSetRecord:
    """Diameter of one node. For a collapsed node this is the observed value <= 0."""

    address: Address
    diameter: float
    collapsed: bool = False


@dataclass
class AddressTree:
    """Generating sets keyed by address, in breadth-first (lexicographic per level) order."""

    depth: int
    symbol_count: int
    records: dict[Address, GeneratingSetRecord]

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[GeneratingSetRecord]:
        return iter(self.records.values())

    def __getitem__(self, address: Address) -> GeneratingSetRecord:
        return self.records[address]

    def __contains__(self, address: Address) -> bool:
        return address in self.records

    def level(self, n: int) -> list[GeneratingSetRecord]:
        return [r for r in self.records.values() if r.address.stage == n]

    def leaves(self) -> list[GeneratingSetRecord]:
        """Surviving nodes of the deepest stage."""
        return [r for r in self.level(self.depth) if not r.collapsed]

    def collapsed(self) -> list[GeneratingSetRecord]:
        return [r for r in self.records.values() if r.collapsed]


def moran_dimension(system: SystemDescriptor, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Root s of sum_j ratio_j**s = 1 by bisection.

    The sum is strictly decreasing in s, equals K >= 2 at s = 0 and is at most
    1 at ln K / ln(1/xi_max), so that bracket (widened by 1) contains the root.
    """
    ratios = system.ratios

    def excess(s):
        return math.fsum(r**s for r in ratios) - 1.0

    lo = 0.0
    hi = math.log(len(ratios)) / math.log(1.0 / system.xi_max) + 1.0
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
    s = lo if abs(excess(lo)) <= abs(excess(hi)) else hi
    if abs(excess(s)) > tol:
        raise ToleranceNotMet(f"|sum ratio**s - 1| = {abs(excess(s)):.3g} exceeds tol {tol:g}")
    return s


def _product(ratios: Sequence[float], symbols: Iterable[int]) -> float:
    prod = 1.0
    for s in symbols:
        prod *= ratios[s - 1]
    return prod


def noiseless_diameter(system: SystemDescriptor, address: Address) -> float:
    """Product of the ratios along ``address``; 1 for the root."""
    address.check(system)
    return _product(system.ratios, address.symbols)


def tree_size(symbol_count: int, depth: int) -> int:
    return sum(symbol_count**m for m in range(depth + 1))


def check_tree_budget(symbol_count: int, depth: int, node_budget: int = DEFAULT_NODE_BUDGET) -> int:
    if depth < 0:
        raise ValidationError(f"depth must be >= 0, got {depth}")
    size = tree_size(symbol_count, depth)
    if size > node_budget:
        raise DepthTooLarge(
            f"a {symbol_count}-ary tree of depth {depth} has {size} nodes, budget is {node_budget}"
        )
    return size


def enumerate_addresses(
    system: SystemDescriptor, depth: int, node_budget: int = DEFAULT_NODE_BUDGET
) -> AddressTree:
    """Complete K-ary address tree to ``depth`` with noiseless diameters."""
    check_tree_budget(system.symbol_count, depth, node_budget)
    root = Address()
    records = {root: GeneratingSetRecord(root, 1.0)}
    frontier = [records[root]]
    for _ in range(depth):
        nxt = []
        for parent in frontier:
            for j in range(1, system.symbol_count + 1):
                addr = parent.address.child(j)
                rec = GeneratingSetRecord(addr, parent.diameter * system.ratio(j))
                records[addr] = rec
                nxt.append(rec)
        frontier = nxt
    return AddressTree(depth, system.symbol_count, records)


def emit_intervals(system: SystemDescriptor, tree: AddressTree) -> list[tuple[str, float]]:
    """``(address, length)`` rows for the surviving leaves of ``tree``."""
    if tree.symbol_count != system.symbol_count:
        raise ValidationError("tree and system disagree on the number of maps")
    return [(str(rec.address), rec.diameter) for rec in tree.leaves()]
