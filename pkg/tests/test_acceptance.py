"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v -s`` to see the lines
inline; they are also repeated in the terminal summary.
"""

import json
import math
import os
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np

from noisyfractal import (
    Address,
    AddressPolicy,
    DensityNoise,
    TriValuedNoise,
    build_density,
    compute_l,
    compute_n0,
    distribution_case1,
    distribution_case2,
    exact_enumeration,
    moran_dimension,
    monte_carlo_distribution,
    run_path,
    validate_case1,
    validate_system,
)
from noisyfractal.case1 import DEEP
from noisyfractal.chaos import rationals_up_to, sweep_truncation, verify_truncation_bound


def _best_time(fn, repeats=5):
    best = math.inf
    for _ in range(repeats):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return out, best


def test_1_moran_dimension(verdict):
    cantor = validate_system(["1/3", "1/3"])
    sierpinski = validate_system(["1/2", "1/2", "1/2"])
    s1, t1 = _best_time(lambda: moran_dimension(cantor))
    s2, t2 = _best_time(lambda: moran_dimension(sierpinski))
    e1 = abs(s1 - math.log(2) / math.log(3))
    e2 = abs(s2 - math.log(3) / math.log(2))
    ok = e1 <= 1e-12 and e2 <= 1e-12 and t1 < 0.01 and t2 < 0.01
    verdict("1 dimension", ok, f"errors {e1:.1e}, {e2:.1e}; {1e3 * max(t1, t2):.2f} ms")
    assert ok


def test_2_zero_noise_identity(verdict):
    systems = [validate_system(["1/3", "1/3"]), validate_system([0.5, 0.25, 0.2])]
    mismatches = collapses = 0
    for system in systems:
        noise = TriValuedNoise.uniform(0, system.symbol_count)
        for policy in (AddressPolicy(), AddressPolicy("uniform"), AddressPolicy.parse("fixed:1.2.2")):
            out = run_path(system, noise, policy, 1000, seed=3, trace=True)
            collapses += out.status != "survived"
            prod = 1.0
            for state in out.trace[1:]:
                prod = prod * system.ratios[state.address.symbols[-1] - 1]
                mismatches += state.product != prod or state.diameter != prod or state.noise_term != 0.0
    ok = mismatches == 0 and collapses == 0
    verdict("2 zero-noise identity", ok, f"{mismatches} mismatches, {collapses} collapses over 1000 stages")
    assert ok


def test_3_noise_envelope(verdict):
    system = validate_system(["1/3", "1/3"])
    noise = TriValuedNoise.uniform(0.1, 2)
    t = time.perf_counter()
    dist = monte_carlo_distribution(system, noise, AddressPolicy("uniform"), 10**5, 50, seed=11)
    elapsed = time.perf_counter() - t
    ok = dist.max_abs_noise <= 0.05 + 1e-12 and elapsed < 5
    verdict("3 noise envelope", ok, f"max |N| = {dist.max_abs_noise:.15g}; {elapsed:.2f} s")
    assert ok


def test_4_deep_regime_one_third(verdict):
    system = validate_system([0.25, 0.25])
    noise = TriValuedNoise.uniform(0.1, 2)
    assert validate_case1(system, noise)
    address = Address((1, 2) * 6)
    t = time.perf_counter()
    oracle = exact_enumeration(system, noise, address, 12)
    deep = [n for n, r in enumerate(oracle.regimes, start=1) if r == DEEP]
    exact_ok = bool(deep) and all(oracle.exact[n - 1][0] == Fraction(1, 3) for n in deep)
    dist = monte_carlo_distribution(system, noise, AddressPolicy.fixed(address), 10**6, 12, seed=4)
    elapsed = time.perf_counter() - t
    z = [abs(dist.conditional[n - 1] - 1 / 3) / dist.conditional_stderr[n - 1] for n in deep]
    ok = exact_ok and max(z) <= 3 and elapsed < 60
    verdict(
        "4 deep regime LE = 1/3",
        ok,
        f"deep stages {deep[0]}..{deep[-1]} exact; MC max {max(z):.2f} SE; {elapsed:.1f} s",
    )
    assert ok


def _case1_errors(delta, stages=4):
    system = validate_system([0.25, 0.25])
    noise = TriValuedNoise.uniform(delta, 2)
    address = Address((1,) * stages)
    return (
        distribution_case1(system, noise, address, stages),
        exact_enumeration(system, noise, address, stages),
    )


def test_5a_case1_relative_error(verdict):
    # known to fail: the transitional formula is an approximation and gives
    # 0.265625 where exact counting gives 1/3 at stage 3
    t = time.perf_counter()
    analytic, oracle = _case1_errors(0.1)
    elapsed = time.perf_counter() - t
    assert np.allclose(analytic.c, [0, 0, 0.265625, 0.244792], atol=5e-7)
    rel = [
        abs(a - e) / e if e > 0 else abs(a - e)
        for a, e in zip(analytic.c, oracle.c)
    ]
    ok = max(rel) <= 0.10 and elapsed < 30
    verdict(
        "5a analytic C within 10% of enumeration",
        ok,
        "relative errors " + ", ".join(f"{r:.3f}" for r in rel),
    )
    assert ok


def test_5b_case1_error_shrinks(verdict):
    t = time.perf_counter()
    errors = []
    for delta in (0.1, 0.05, 0.01):
        analytic, oracle = _case1_errors(delta, stages=12)
        errors.append(float(np.max(np.abs(analytic.le - oracle.le))))
    elapsed = time.perf_counter() - t
    ok = errors[0] > errors[1] > errors[2] and elapsed < 30
    verdict("5b error shrinks with delta", ok, "max |LE error| " + ", ".join(f"{e:.4f}" for e in errors))
    assert ok


def test_6_case2_pipeline(verdict):
    system = validate_system([0.5, 0.5])
    t = time.perf_counter()
    grid = build_density("uniform", 2**14, beta=1.5)
    noise = DensityNoise.uniform(grid, 2)
    address = Address((1, 2, 1, 2, 1, 2))
    fine = distribution_case2(system, noise, address, 6, resolution=2**15)
    coarse = distribution_case2(system, noise, address, 6, resolution=2**14)
    hand = abs(coarse.c[0] - 1 / 6)
    shift = float(np.max(np.abs(fine.c - coarse.c)))
    dist = monte_carlo_distribution(system, noise, AddressPolicy.fixed(address), 10**6, 6, seed=6)
    z = np.abs(coarse.c - dist.estimates) / dist.stderr
    elapsed = time.perf_counter() - t
    ok = hand <= 1e-3 and shift < 1e-3 and float(z.max()) <= 3 and elapsed < 60
    verdict(
        "6 density pipeline",
        ok,
        f"|C1 - 1/6| = {hand:.1e}; grid shift {shift:.1e}; MC max {z.max():.2f} SE; {elapsed:.1f} s",
    )
    assert ok


def test_7_truncation_bound(verdict):
    system = validate_system(["1/3", "1/3"])
    t = time.perf_counter()
    bounds = compute_n0(1 / 3, 0.1)
    x0s = rationals_up_to(512)
    collapse = verify_truncation_bound(sweep_truncation(system, 0.1, x0s, "collapse"))
    merge = verify_truncation_bound(sweep_truncation(system, 0.1, x0s, "merge"))
    elapsed = time.perf_counter() - t
    ok = (
        bounds.n0 == 3
        and bounds.a == Fraction(1, 16)
        and collapse.hits > 0
        and collapse.passed
        and merge.hits > 0
        and merge.passed
        and elapsed < 30
    )
    verdict(
        "7 truncation within k + n0",
        ok,
        f"collapse {collapse.within_bound}/{collapse.hits}, merge {merge.within_bound}/{merge.hits} "
        f"of {len(x0s)} starts; {elapsed:.1f} s",
    )
    assert ok


def _l_sweep(upper_bound):
    xi, eps = 1 / 3, 0.1
    n0 = compute_n0(xi, eps).n0
    worst = []
    for k in range(1, 11):
        prod = xi**k
        lo, hi = -prod, upper_bound(k)
        # 1000 interior points of the open interval
        values = lo + (hi - lo) * (np.arange(1, 1001) / 1001)
        worst.append(max(compute_l(prod, float(v), xi, eps) for v in values))
    return n0, worst


def test_8_l_below_n0(verdict):
    # known to fail: this range includes noise values no path can reach and
    # there l reaches n0 at k = 1; see test_chaos for the reachable range
    eps, xi = 0.1, 1 / 3
    t = time.perf_counter()
    n0, worst = _l_sweep(lambda k: eps * (1 - xi ** (k + 1)) / (1 - xi))
    elapsed = time.perf_counter() - t
    ok = max(worst) < n0 and elapsed < 1
    verdict("8 l < n0 over the stated range", ok, f"n0 = {n0}, max l per k = {worst}; {elapsed:.2f} s")
    assert ok


def _run_cli(args, threads, tmp_path):
    env = dict(os.environ, NFL_THREADS=str(threads))
    out = subprocess.run(
        [sys.executable, "-m", "noisyfractal", *args],
        env=env,
        capture_output=True,
        check=True,
        cwd=tmp_path,
    )
    return out.stdout


def test_9_determinism(verdict, tmp_path):
    cfg = tmp_path / "case1.json"
    cfg.write_text(json.dumps({"ratios": [0.25, 0.25], "noise": {"type": "trivalued", "deltas": [0.1, 0.1]}}))
    runs = {
        "simulate": ["simulate", "--config", str(cfg), "--trials", "50000", "--horizon", "10",
                     "--policy", "uniform", "--seed", "17"],
        "analytic1": ["analytic1", "--config", str(cfg), "--max-stage", "8", "--policy", "uniform", "--seed", "17"],
    }
    same = {}
    for name, args in runs.items():
        outputs = {_run_cli(args, n, tmp_path) for n in (1, 2, 8)}
        same[name] = len(outputs) == 1
    ok = all(same.values())
    verdict("9 byte-identical across NFL_THREADS", ok, ", ".join(f"{k}: {v}" for k, v in same.items()))
    assert ok
