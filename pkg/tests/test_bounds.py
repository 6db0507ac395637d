import math
import sys

import pytest
from hypothesis import given, strategies as st

from abperc.bounds import (BoundCurveParams, critical_intensity, delta_of_mu,
                           intensity_to_volume_fraction, lambda_c_scaled, lower_bound_curve,
                           upper_bound_constant, upper_envelope, volume_fraction_to_intensity)


def test_lambda_c_scaled_examples():
    assert lambda_c_scaled(0.3591, 1.0, 2) == 0.3591
    assert lambda_c_scaled(0.35909, 0.5, 2) == pytest.approx(1.4364, abs=1e-4)
    assert lambda_c_scaled(0.08163, 0.5, 3) == pytest.approx(0.6530, abs=1e-4)
    with pytest.raises(ValueError):
        lambda_c_scaled(1.0, 0.0, 2)


@given(st.floats(1e-3, 1e3), st.floats(1e-2, 1e2), st.integers(1, 6))
def test_lambda_c_scaled_round_trip(v, r, d):
    back = lambda_c_scaled(lambda_c_scaled(v, r, d), 1 / r, d)
    assert back == pytest.approx(v, rel=1e-12)


def test_volume_fraction_examples():
    assert volume_fraction_to_intensity(1 - math.exp(-math.pi), 2, 1.0) == pytest.approx(1.0,
                                                                                          rel=1e-14)
    assert volume_fraction_to_intensity(0.67635, 2) == pytest.approx(0.35909, abs=1e-5)
    # the rounded reference 0.08163 sits 1.1e-5 above the exact inversion 0.0816190
    assert volume_fraction_to_intensity(0.28957, 3) == pytest.approx(0.08163, abs=2e-5)
    assert volume_fraction_to_intensity(0.28957, 3) == pytest.approx(
        -math.log(0.71043) * 3 / (4 * math.pi), rel=1e-14)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            volume_fraction_to_intensity(bad, 2)


@given(st.floats(0.01, 0.99), st.integers(1, 5), st.floats(0.1, 3))
def test_volume_fraction_inverse(phi, d, radius):
    lam = volume_fraction_to_intensity(phi, d, radius)
    assert intensity_to_volume_fraction(lam, d, radius) == pytest.approx(phi, rel=1e-12)


def test_critical_intensity_reference():
    assert critical_intensity(2) == pytest.approx(1.4364, abs=1e-4)
    assert critical_intensity(3) == pytest.approx(0.6530, abs=1e-4)


def test_upper_bound_constant():
    assert upper_bound_constant(1.0, 4.0, 1) == pytest.approx(4.0)
    assert upper_bound_constant(1.4364, 0.5, 2) == pytest.approx(1.64e5, rel=0.01)
    assert upper_bound_constant(2.0, 0.5, 2) > upper_bound_constant(1.0, 0.5, 2)
    assert upper_envelope(math.exp(-1), 2.0, 1) == pytest.approx(2.0 * math.e ** 2)


def test_lower_bound_curve():
    params = BoundCurveParams(c=2.0, c_prime=1.0, lambda_c_ref=1.4364, r=0.5, d=2)
    assert lower_bound_curve(params, 2.0) == 0.0
    assert lower_bound_curve(params, 2.0 / math.e) == pytest.approx(2.0)
    assert lower_bound_curve(params, 5.0) == 0.0
    vals = [lower_bound_curve(params, 2.0 ** -k) for k in range(2, 60)]
    assert all(b > a for a, b in zip(vals, vals[1:])) and vals[-1] > 70
    with pytest.raises(ValueError):
        lower_bound_curve(params, 0.0)
    with pytest.raises(ValueError):
        BoundCurveParams(c=-1.0, c_prime=1.0, lambda_c_ref=1.0, r=0.5, d=2)


def test_delta_of_mu():
    assert delta_of_mu(0.7, 0.0) == 0.7
    assert delta_of_mu(0.7, 0.7) == pytest.approx(0.7 / math.e)


@given(st.floats(0.0, 100.0), st.floats(0.05, 20.0))
def test_delta_and_lower_curve_are_inverses(mu, cp):
    delta = delta_of_mu(cp, mu)
    if delta < sys.float_info.min:
        return  # subnormal delta has lost relative precision
    back = lower_bound_curve(cp, delta)
    assert back == pytest.approx(mu, rel=1e-12, abs=1e-12)
