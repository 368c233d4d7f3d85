import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from noisyfractal import build_density, sample_density
from noisyfractal.errors import BadParameters, UnknownFamily
from noisyfractal.noise import make_rng


@pytest.mark.parametrize(
    "family,params",
    [
        ("uniform", {"beta": 1.5}),
        ("triangular", {"beta": 0.3}),
        ("truncated_gaussian", {"sigma": 0.1, "cut": 0.3}),
        ("tabulated", {"values": [0, 1, 2, 1, 0], "lower": -1, "upper": 1}),
    ],
)
def test_families_have_unit_mass(family, params):
    grid = build_density(family, 256, **params)
    assert grid.mass() == pytest.approx(1.0, abs=1e-12)
    assert grid.mean() == pytest.approx(0.0, abs=1e-9)


def test_bad_family_and_params():
    with pytest.raises(UnknownFamily):
        build_density("cauchy", beta=1)
    with pytest.raises(BadParameters):
        build_density("uniform", beta=-1)
    with pytest.raises(BadParameters):
        build_density("uniform", 10, beta=1)
    with pytest.raises(BadParameters):
        build_density("uniform", beta=1, sigma=2)


def test_sampling_matches_cdf():
    grid = build_density("triangular", 1024, beta=1.0)
    x = sample_density(grid, make_rng(1), 200_000)
    assert x.min() >= -1 and x.max() <= 1
    # P(X <= -1/2) = 1/8 for the unit triangle
    assert np.mean(x <= -0.5) == pytest.approx(0.125, abs=3e-3)


@given(st.floats(0.01, 5))
@settings(max_examples=30, deadline=None)
def test_uniform_sample_range(beta):
    grid = build_density("uniform", 64, beta=beta)
    x = sample_density(grid, make_rng(0), 1000)
    assert np.all(np.abs(x) <= beta * (1 + 1e-12))
