import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from degenctrl.errors import DomainError
from degenctrl.specfun import (
    bessel_j,
    bessel_j_prime,
    bessel_j_series,
    bessel_zeros,
    gamma_fn,
    log_gamma,
    zero_bounds,
)


def alternating_series_j0(x, terms=50):
    """J_0(x) = sum (-1)^m (x/2)^(2m) / (m!)^2, summed directly."""
    total = 0.0
    term = 1.0
    for m in range(terms):
        total += term
        term *= -((x / 2) ** 2) / ((m + 1) ** 2)
    return total


class TestBesselJ:
    def test_origin(self):
        assert bessel_j(0, 0) == 1.0
        assert bessel_j(1.5, 0) == 0.0

    def test_half_order_closed_form(self):
        assert abs(bessel_j(0.5, math.pi)) < 1e-12
        x = np.linspace(0.1, 30, 50)
        ref = np.sqrt(2 / (np.pi * x)) * np.sin(x)
        np.testing.assert_allclose(bessel_j(0.5, x), ref, rtol=1e-12, atol=1e-15)

    def test_series_oracle_at_one(self):
        assert abs(bessel_j(0, 1.0) - alternating_series_j0(1.0)) < 1e-13

    @pytest.mark.parametrize("nu", [0.0, 0.3, 0.5, 1.7, 4.0, 10.0])
    def test_agrees_with_power_series(self, nu):
        x = np.linspace(0.05, 2.0 + nu, 17)
        np.testing.assert_allclose(bessel_j(nu, x), [bessel_j_series(nu, v) for v in x], rtol=1e-12, atol=1e-300)

    def test_large_argument_against_mpmath(self):
        mpmath = pytest.importorskip("mpmath")
        for nu in (0.2, 3.5, 12.0):
            for x in (25.0, 80.0, 300.0):
                ref = float(mpmath.besselj(nu, x))
                env = float(mpmath.sqrt(mpmath.besselj(nu, x) ** 2 + mpmath.bessely(nu, x) ** 2))
                assert abs(bessel_j(nu, x) - ref) <= 1e-10 * env

    def test_domain(self):
        with pytest.raises(DomainError):
            bessel_j(0.5, -1.0)
        with pytest.raises(DomainError):
            bessel_j(-0.5, 1.0)
        with pytest.raises(DomainError):
            bessel_j(0.5, float("nan"))


class TestBesselJPrime:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_half_order_at_zeros(self, k):
        expected = (-1) ** k * math.sqrt(2 / (k * math.pi**2))
        assert abs(bessel_j_prime(0.5, k * math.pi) - expected) < 1e-12

    def test_small_argument(self):
        x = 1e-4
        assert bessel_j_prime(0, x) == pytest.approx(-x / 2, rel=1e-8)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0, 20), st.floats(0.01, 50))
    def test_recurrence_identity(self, nu, x):
        lhs = x * bessel_j_prime(nu, x) - nu * bessel_j(nu, x) + x * bessel_j(nu + 1, x)
        scale = max(1.0, abs(x * bessel_j_prime(nu, x)), abs(nu * bessel_j(nu, x)))
        assert abs(lhs) <= 1e-12 * scale

    def test_domain(self):
        with pytest.raises(DomainError):
            bessel_j_prime(1.0, 0.0)


class TestZeros:
    def test_half_order(self):
        z = bessel_zeros(0.5, 3)
        np.testing.assert_allclose(z.zeros, [math.pi, 2 * math.pi, 3 * math.pi], rtol=0, atol=1e-12)

    def test_first_zero_of_j0(self):
        assert abs(bessel_zeros(0.0, 1)[1] - 2.404825557695773) < 1e-10

    @pytest.mark.parametrize("nu", [0.0, 0.1, 0.5, 5.0, 10.0, 40.0])
    def test_brackets(self, nu):
        z = bessel_zeros(nu, 60)
        for k in range(1, 61):
            lo, hi = zero_bounds(nu, k)
            assert lo - 1e-12 <= z[k] <= hi + 1e-12

    @pytest.mark.parametrize("nu", [0.0, 0.25, 1.0, 7.3])
    def test_residual_and_derivative_bound(self, nu):
        z = bessel_zeros(nu, 100)
        jp = np.abs(bessel_j_prime(nu, z.zeros))
        assert np.all(z.residuals() <= 1e-12 * np.maximum(1.0, jp))
        assert np.all(jp <= 1.0)
        assert np.all(np.diff(z.zeros) > 0)

    @pytest.mark.parametrize("nu", [0.0, 0.4, 2.0, 6.5])
    def test_interlacing(self, nu):
        a = bessel_zeros(nu, 40).zeros
        b = bessel_zeros(nu + 1, 40).zeros
        assert np.all(a < b)
        assert np.all(b[:-1] < a[1:])

    def test_difference_trichotomy(self):
        d_low = np.diff(bessel_zeros(0.1, 500).zeros)
        d_half = np.diff(bessel_zeros(0.5, 500).zeros)
        d_high = np.diff(bessel_zeros(3.0, 500).zeros)
        assert np.all(np.diff(d_low) > -1e-10)
        assert np.all(np.diff(d_high) < 1e-10)
        np.testing.assert_allclose(d_half, math.pi, rtol=0, atol=1e-10)
        for d in (d_low, d_high):
            assert abs(d[-1] - math.pi) < 0.05

    def test_one_based_indexing(self):
        z = bessel_zeros(0.5, 2)
        with pytest.raises(IndexError):
            z[0]
        with pytest.raises(IndexError):
            z[3]

    def test_bad_count(self):
        with pytest.raises((ValueError, DomainError)):
            bessel_zeros(0.5, 0)


class TestGamma:
    def test_values(self):
        assert gamma_fn(1.0) == 1.0
        assert abs(gamma_fn(1.5) - math.sqrt(math.pi) / 2) < 1e-13
        assert abs(gamma_fn(5.0) - 24.0) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.floats(0.05, 150))
    def test_log_gamma_consistent(self, x):
        assert log_gamma(x) == pytest.approx(math.log(gamma_fn(x)), rel=1e-12, abs=1e-13)

    def test_recurrence(self):
        for x in (0.3, 2.2, 17.5):
            assert gamma_fn(x + 1) == pytest.approx(x * gamma_fn(x), rel=1e-13)

    def test_domain(self):
        with pytest.raises(DomainError):
            gamma_fn(0.0)
        with pytest.raises(DomainError):
            gamma_fn(-1.5)
