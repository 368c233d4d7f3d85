from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from noisyfractal import TentNoise, TriValuedNoise, tent_delta, validate_case1, validate_system, validate_tent
from noisyfractal.errors import ValidationError
from noisyfractal.noise import make_rng, noise_bound, sample_trivalued


def test_trivalued_draws_three_values_evenly():
    noise = TriValuedNoise.uniform(0.1, 2)
    d = noise.draw(np.zeros(300_000, dtype=int), make_rng(5))
    values, counts = np.unique(d, return_counts=True)
    assert list(values) == [-0.1, 0.0, 0.1]
    assert np.allclose(counts / d.size, 1 / 3, atol=4e-3)


def test_sample_trivalued_uses_symbol():
    noise = TriValuedNoise.of([0.1, 0.2])
    seen = {sample_trivalued(noise, 2, make_rng(i)) for i in range(60)}
    assert seen == {-0.2, 0.0, 0.2}


def test_amplitude_range():
    with pytest.raises(ValidationError):
        TriValuedNoise.uniform(1.0, 2)
    with pytest.raises(ValidationError):
        TriValuedNoise.of([-0.1])
    with pytest.raises(ValidationError):
        TriValuedNoise.uniform(0.1, 3).check(validate_system([0.5, 0.5]))


def test_case1_condition_boundary_is_exact():
    # 1/3 = 0.1 / (0.2 + 0.1): equality must count as holding
    assert validate_case1(validate_system(["1/3", "1/3"]), TriValuedNoise.uniform("1/10", 2))
    assert validate_case1(validate_system([0.25, 0.25]), TriValuedNoise.uniform(0.1, 2))
    report = validate_case1(validate_system([0.5, 0.5]), TriValuedNoise.uniform(0.1, 2))
    assert not report
    assert "FAILS" in str(report)


def test_case1_condition_mixed_amplitudes():
    system = validate_system([0.2, 0.2])
    assert validate_case1(system, TriValuedNoise.of([0.1, 0.2]))  # 0.2 <= 0.1/0.5
    assert not validate_case1(system, TriValuedNoise.of([0.1, 0.3]))


def test_noise_bound():
    assert noise_bound(validate_system(["1/3", "1/3"]), TriValuedNoise.uniform(0.1, 2)) == pytest.approx(0.05)


def test_tent_condition():
    assert validate_tent(validate_system(["1/3", "1/3"]), TentNoise(0.1))
    assert not validate_tent(validate_system([0.5, 0.5]), TentNoise(0.25))
    with pytest.raises(ValidationError):
        TentNoise(0.0)
    with pytest.raises(ValidationError):
        TentNoise(0.1, variant="sideways")


@given(st.fractions(min_value=0, max_value=1))
def test_tent_delta_sign(x):
    collapse = tent_delta(x, TentNoise(0.1))
    merge = tent_delta(x, TentNoise(0.1, variant="merge"))
    assert collapse == -merge
    assert (collapse < 0) == (x < Fraction(1, 2))


def test_streams_are_independent_of_creation_order():
    a = make_rng(7, 3).random(4)
    make_rng(7, 1).random(10)
    assert np.array_equal(a, make_rng(7, 3).random(4))
    assert not np.array_equal(a, make_rng(7, 2).random(4))
