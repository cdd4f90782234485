"""Special functions for the harmonic-potential steady state.

``erf``/``erfc`` come from :mod:`math`; ``erfi`` and the single
hypergeometric instance 2F2(1, 1; 3/2, 2; z) are evaluated here.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .core import NumericalError

__all__ = ["SeriesTolerance", "erf", "erfc", "erfi", "hyp2f2_1_1_32_2"]

_TWO_OVER_SQRT_PI = 2.0 / math.sqrt(math.pi)
_ERFI_GUARD = 30.0
# e**(x*x) overflows float64 just above this argument
_ERFI_FINITE = math.sqrt(math.log(1.7976931348623157e308)) - 0.05
_SERIES_CUTOVER = 6.0


@dataclass(frozen=True)
class SeriesTolerance:
    rel_tol: float = 1e-12
    max_terms: int = 500

    def __post_init__(self):
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.max_terms < 10:
            raise ValueError("max_terms must be at least 10")


def erf(x: float) -> float:
    return math.copysign(math.erf(abs(x)), x)


def erfc(x: float) -> float:
    return math.erfc(x)


def _erfi_series(x: float) -> float:
    # erfi(x) = 2/sqrt(pi) * sum x**(2n+1) / (n! (2n+1)); all terms positive for x > 0
    x2 = x * x
    power = x          # x**(2n+1) / n!
    total = x
    n = 0
    while True:
        n += 1
        power *= x2 / n
        term = power / (2 * n + 1)
        total += term
        if term <= 1e-17 * total:  # <= so that subnormal x, where x*x underflows to 0, terminates
            break
    return _TWO_OVER_SQRT_PI * total


def _erfi_asymptotic(x: float) -> float:
    # erfi(x) ~ e**(x^2) / (x sqrt(pi)) * sum_k (2k-1)!! / (2 x^2)**k, optimally truncated
    inv = 1.0 / (2.0 * x * x)
    term = 1.0
    total = 1.0
    k = 0
    while True:
        k += 1
        nxt = term * (2 * k - 1) * inv
        if nxt >= term or nxt < 1e-17 * total:
            break
        term = nxt
        total += term
    return math.exp(x * x) / (x * math.sqrt(math.pi)) * total


def erfi(x: float) -> float:
    """Imaginary error function ``-i erf(i x) = 2/sqrt(pi) int_0^x exp(t^2) dt``.

    Raises
    ------
    OverflowError
        If ``|x| > 30`` or the result is not representable in float64.
    """
    ax = abs(x)
    if ax > _ERFI_GUARD or ax > _ERFI_FINITE:
        raise OverflowError(f"erfi({x}) overflows float64")
    if ax <= _SERIES_CUTOVER:
        value = _erfi_series(ax) if ax > 0 else 0.0
    else:
        value = _erfi_asymptotic(ax)
    return math.copysign(value, x)


def hyp2f2_1_1_32_2(z: float, tol: SeriesTolerance = SeriesTolerance()) -> float:
    """2F2(1, 1; 3/2, 2; z) by direct summation of its Taylor series.

    Consecutive terms obey ``t[n+1] / t[n] = (n + 1) z / ((n + 3/2)(n + 2))``.
    For ``z < 0`` the tail is alternating and bounded by the first omitted
    term once the terms decrease; for ``z >= 0`` the geometric bound
    ``t / (1 - ratio)`` is used.

    Raises
    ------
    NumericalError
        If the bound is not met within ``tol.max_terms`` terms, or if
        cancellation between large alternating terms leaves fewer
        significant digits than ``tol.rel_tol`` asks for.
    """
    if not math.isfinite(z):
        raise ValueError("z must be finite")
    term = 1.0
    total = 1.0
    biggest = 1.0
    for n in range(tol.max_terms):
        ratio = (n + 1) * z / ((n + 1.5) * (n + 2))
        term *= ratio
        total += term
        biggest = max(biggest, abs(term))
        next_ratio = abs((n + 2) * z / ((n + 2.5) * (n + 3)))
        if next_ratio < 1:
            if z < 0:
                bound = abs(term) * next_ratio
            else:
                bound = abs(term) * next_ratio / (1 - next_ratio)
            if bound <= tol.rel_tol * abs(total):
                if biggest * 2.2e-16 > tol.rel_tol * abs(total):
                    raise NumericalError(
                        f"2F2 series at z={z} loses too many digits to cancellation")
                return total
    raise NumericalError(f"2F2 series at z={z} did not converge in {tol.max_terms} terms")
