"""Special functions against frozen high-precision oracles.

Reference values were computed once with mpmath at 40 significant digits
(``mpmath.erfi``, ``mpmath.hyp2f2`` and ``mpmath.quad`` of the defining
integrals) and are stored here as literals.
"""
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dealermodel import specfun
from dealermodel.analytic import harmonic_normalization
from dealermodel.core import NumericalError
from dealermodel.specfun import SeriesTolerance, erf, erfc, erfi, hyp2f2_1_1_32_2

# (2/sqrt(pi)) * quad(exp(-t^2), 0, 1) and (2/sqrt(pi)) * quad(exp(t^2), 0, 1)
ERF_1_QUAD = 0.84270079294971486934
ERFI_1_QUAD = 1.650425758797542876

ERFI_TABLE = [
    (0.1, 0.11321517416959979929),
    (0.5, 0.61495209469651098084),
    (2.0, 18.564802414575552599),
    (3.0, 1629.9946226015656511),
    (5.0, 8298273880.6768035161),
    (6.0, 411275145582823.87097),
    (6.5, 196225267754784050.05),
    (7.0, 1.5534862534605039939e+20),
    (10.0, 1.5243074227086696994e+42),
    (20.0, 1.4747975396287862024e+172),
    (26.0, 8.3146371647309876553e+291),
]

HYP_TABLE = [
    (-0.25, 0.92193734569406867331),
    (-1.0, 0.7394416300990793005),
    (-5.0, 0.34482756929418524804),
    (-10.0, 0.21057151592798643824),
    (0.5, 1.1914986370255153063),
    (2.0, 2.2508012081145373213),
    (10.0, 654.57650634107861648),
]


def ten_term_series(z):
    """Independent oracle: sum_{n<10} n! z^n / ((3/2)_n (2)_n), built from Pochhammer symbols."""
    total = 0.0
    for n in range(10):
        poch_32 = math.prod(1.5 + k for k in range(n))
        poch_2 = math.prod(2 + k for k in range(n))
        total += math.factorial(n) * z**n / (poch_32 * poch_2)
    return total


def test_erf_basic_values():
    assert erf(0.0) == 0.0
    assert erf(1.0) == pytest.approx(ERF_1_QUAD, abs=1e-10)


@given(st.floats(-50, 50, allow_nan=False))
def test_erf_odd_and_bounded(x):
    assert erf(-x) == -erf(x)
    assert abs(erf(x)) <= 1.0


@pytest.mark.parametrize("x", np.linspace(-6, 6, 49))
def test_erf_plus_erfc(x):
    assert erf(x) + erfc(x) == pytest.approx(1.0, abs=1e-14)


def test_erfi_small_and_unit_arguments():
    assert erfi(0.0) == 0.0
    assert erfi(1e-8) == pytest.approx(2e-8 / math.sqrt(math.pi), rel=1e-15)
    assert erfi(1.0) == pytest.approx(ERFI_1_QUAD, abs=1e-10)


@pytest.mark.parametrize("x, expected", ERFI_TABLE)
def test_erfi_against_reference_table(x, expected):
    assert erfi(x) == pytest.approx(expected, rel=1e-13)
    assert erfi(-x) == -erfi(x)


@given(st.floats(0, 26, allow_nan=False))
def test_erfi_odd_exactly(x):
    assert erfi(-x) == -erfi(x)


@pytest.mark.parametrize("x", [5e-324, 1e-310, 1e-160])
def test_erfi_subnormal_and_tiny_arguments(x):
    # x*x underflows here; erfi(x) ~ 2x/sqrt(pi) and the series must still stop
    assert erfi(x) == pytest.approx(2 * x / math.sqrt(math.pi), rel=1e-15, abs=5e-324)
    assert erfi(-x) == -erfi(x)


def test_erfi_monotone_across_branch_switch():
    x = np.linspace(0, 26, 5201)
    y = np.array([erfi(v) for v in x])
    assert np.all(np.diff(y) > 0)
    lo, hi = erfi(6.0), erfi(math.nextafter(6.0, 7.0))
    assert hi >= lo and (hi - lo) / lo < 1e-13


@pytest.mark.parametrize("x", [0.1, 0.5, 1.0])
def test_erfi_derivative(x):
    h = 1e-5
    fd = (erfi(x + h) - erfi(x - h)) / (2 * h)
    assert fd == pytest.approx(2 / math.sqrt(math.pi) * math.exp(x * x), abs=1e-6)


@pytest.mark.parametrize("x", [26.7, 30.0, 30.5, -31.0, 1e3])
def test_erfi_overflow_guard(x):
    with pytest.raises(OverflowError):
        erfi(x)


def test_hyp2f2_at_zero_is_exactly_one():
    assert hyp2f2_1_1_32_2(0.0) == 1.0


def test_hyp2f2_ten_term_oracle():
    assert hyp2f2_1_1_32_2(-0.25) == pytest.approx(ten_term_series(-0.25), abs=1e-9)


@pytest.mark.parametrize("z, expected", HYP_TABLE)
def test_hyp2f2_against_reference_table(z, expected):
    assert hyp2f2_1_1_32_2(z) == pytest.approx(expected, rel=1e-11)


def test_hyp2f2_minus_four_matches_quadrature_identity():
    # With u = 2, L = 2, sigma_cm = 1 the erf*erfi/2F2 expression for Z has a = 2,
    # so solving it for 2F2(-4) with the quadrature Z gives an independent value.
    u, L, sc = 2.0, 2.0, 1.0
    a = u * L / (2 * sc)
    Z = harmonic_normalization(L, sc, u, method="quadrature")
    implied = (2 * math.pi * sc**2 * erf(a) * erfi(a) - Z * 2 * u * sc * math.sqrt(math.pi)) / (u * u * L * L)
    assert hyp2f2_1_1_32_2(-4.0) == pytest.approx(implied, abs=1e-8)


@given(st.floats(-12, 12, allow_nan=False))
def test_hyp2f2_next_term_is_below_tolerance(z):
    tol = SeriesTolerance()
    value = hyp2f2_1_1_32_2(z, tol)
    # rebuild the partial sum and the first omitted term
    term, total, n = 1.0, 1.0, 0
    while abs(total - value) > 0:
        term *= (n + 1) * z / ((n + 1.5) * (n + 2))
        total += term
        n += 1
        assert n < tol.max_terms
    next_term = term * (n + 1) * z / ((n + 1.5) * (n + 2))
    assert abs(next_term) <= tol.rel_tol * abs(value)


def test_hyp2f2_reports_non_convergence():
    with pytest.raises(NumericalError, match="did not converge"):
        hyp2f2_1_1_32_2(50.0, SeriesTolerance(max_terms=10))


def test_hyp2f2_reports_cancellation():
    with pytest.raises(NumericalError, match="cancellation"):
        hyp2f2_1_1_32_2(-60.0)


def test_series_tolerance_validation():
    with pytest.raises(ValueError):
        SeriesTolerance(rel_tol=0.0)
    with pytest.raises(ValueError):
        SeriesTolerance(max_terms=5)


def test_hyp2f2_rejects_non_finite():
    with pytest.raises(ValueError):
        hyp2f2_1_1_32_2(math.inf)


def test_public_names():
    assert set(specfun.__all__) == {"SeriesTolerance", "erf", "erfc", "erfi", "hyp2f2_1_1_32_2"}
