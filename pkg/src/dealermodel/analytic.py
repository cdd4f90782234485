"""Closed-form steady states and scalar predictions of the dealer model.

These are the reference curves that the Monte Carlo simulator, the
finite-difference solver and the lattice model are checked against.

All densities are functions of the relative price ``r`` (a trader's midprice
measured from the centre of mass) and accept scalars or arrays.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

from . import specfun
from .core import GridSpec, ModelError, ModelParams, NumericalError
from .io import write_csv

QUAD_EPSABS = 1e-14
QUAD_EPSREL = 1e-10

_erfi_vec = np.vectorize(specfun.erfi, otypes=[float])


def _positive(**kw):
    for name, value in kw.items():
        if not (np.isfinite(value) and value > 0):
            raise ModelError(f"{name} must be positive, got {value!r}")


def _quad(f, a, b, points=None) -> float:
    """Adaptive quadrature that raises instead of warning on failure."""
    if b <= a:
        return 0.0
    out = integrate.quad(f, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200,
                         points=points, full_output=1)
    value, err = out[0], out[1]
    if len(out) > 3 and err > max(QUAD_EPSABS, 1e3 * QUAD_EPSREL * abs(value)):
        raise NumericalError(f"quadrature on [{a}, {b}] did not converge: {out[3]}")
    return value


def cell_average(f: Callable[[float], float], a: float, b: float, kinks=()) -> float:
    """Average of ``f`` over ``[a, b]``, splitting the quadrature at interior ``kinks``."""
    inner = [x for x in kinks if a < x < b]
    return _quad(lambda x: float(f(x)), a, b, points=inner or None) / (b - a)


def tent_pdf(r, L: float):
    """Steady density of ``r`` without interaction: ``max(0, (L/2 - |r|) / (L^2/4))``."""
    _positive(L=L)
    r = np.asarray(r, dtype=float)
    out = np.maximum(0.0, (L / 2 - np.abs(r)) / (L * L / 4))
    return out if out.ndim else float(out)


def orderbook_profile(r, L: float):
    """Average ask-side order-book depth at distance ``r`` from the centre of mass."""
    r = np.asarray(r, dtype=float)
    return tent_pdf(r - L / 2, L)


def mean_transaction_interval(L: float, sigma2: float) -> float:
    """Mean time between transactions for two traders, ``L^2 / (2 sigma^2)``."""
    _positive(L=L, sigma2=sigma2)
    return L * L / (2.0 * sigma2)


def com_diffusion_constant_n2(sigma2: float) -> float:
    """Diffusion constant ``D = sigma_cm^2 / 2 = sigma^2 / 4`` of the two-trader centre of mass."""
    _positive(sigma2=sigma2)
    return sigma2 / 4.0


def tail_function(x):
    """``F(x) = exp(-x^2/2)/sqrt(2 pi) - (x/2) erfc(x/sqrt(2))``, i.e. ``E[(Z - x)^+]``."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-x * x / 2) / math.sqrt(2 * math.pi) - 0.5 * x * special.erfc(x / math.sqrt(2))
    return out if out.ndim else float(out)


def nlo_meanfield_pdf(r, L: float, N: int):
    """Next-to-leading-order mean-field density for ``N`` traders.

    Boundary layers of width ``eps = L / (2 sqrt(N))`` smooth the kinks of
    the tent at ``r = 0`` and ``|r| = L/2``.
    """
    _positive(L=L)
    if N < 2:
        raise ModelError(f"N must be at least 2, got {N}")
    eps = L / (2.0 * math.sqrt(N))
    a = np.abs(np.asarray(r, dtype=float))
    out = (4 * eps / L**2) * (tail_function((a - L / 2) / eps) - 2 * tail_function(a / eps))
    return out if np.ndim(out) else float(out)


class GeneralPotentialSolution:
    """Steady density under a symmetric avoiding potential ``U``.

    ``phi(r) = exp(-2U(r)/s2) [G(L/2) - G(|r|)] / Z`` on ``|r| <= L/2`` with
    ``G(r) = int_0^r exp(2U(x)/s2) dx`` and ``s2 = sigma_cm^2``.
    """

    def __init__(self, L: float, sigma_cm2: float, U: Callable[[float], float]):
        _positive(L=L, sigma_cm2=sigma_cm2)
        self.L, self.sigma_cm2, self.U = L, sigma_cm2, U
        if abs(U(0.0)) > 1e-12:
            raise ModelError("potential must vanish at r = 0")
        for x in np.linspace(L / 32, L / 2, 16):
            a, b = U(x), U(-x)
            if not (np.isfinite(a) and np.isfinite(b)):
                raise ModelError(f"potential is not finite at r = +-{x}")
            if abs(a - b) > 1e-12 * max(1.0, abs(a)):
                raise ModelError(f"potential is not even: U({x}) = {a} != U({-x}) = {b}")
        self.G_half = self.G(L / 2)
        # Z = 2 int_0^{L/2} exp(-2U/s2) (G(L/2) - G(r)) dr
        self.Z = 2 * _quad(lambda r: math.exp(-2 * U(r) / sigma_cm2) * (self.G_half - self.G(r)),
                           0.0, L / 2)

    def G(self, r: float) -> float:
        return _quad(lambda x: math.exp(2 * self.U(x) / self.sigma_cm2), 0.0, r)

    def __call__(self, r):
        r_arr = np.atleast_1d(np.asarray(r, dtype=float))
        out = np.zeros_like(r_arr)
        for i, ri in enumerate(r_arr):
            a = abs(ri)
            if a < self.L / 2:
                out[i] = math.exp(-2 * self.U(a) / self.sigma_cm2) * (self.G_half - self.G(a)) / self.Z
        return out if np.ndim(r) else float(out[0])


def steady_pdf_general_potential(r, L: float, sigma_cm2: float, U: Callable[[float], float]):
    return GeneralPotentialSolution(L, sigma_cm2, U)(r)


def harmonic_normalization(L: float, sigma_cm: float, u: float, method: str = "closed") -> float:
    """Normalisation ``Z`` of the harmonic-potential steady state.

    ``method="closed"`` uses the erf*erfi / 2F2 expression, ``"quadrature"``
    integrates the unnormalised density directly.
    """
    _positive(L=L, sigma_cm=sigma_cm, u=u)
    a = u * L / (2 * sigma_cm)
    if method == "closed":
        s2 = sigma_cm * sigma_cm
        bracket = (2 * math.pi * s2 * specfun.erf(a) * specfun.erfi(a)
                   - u * u * L * L * specfun.hyp2f2_1_1_32_2(-a * a))
        return bracket / (2 * u * sigma_cm * math.sqrt(math.pi))
    if method == "quadrature":
        ea = specfun.erfi(a)
        return 2 * _quad(lambda r: math.exp(-(u * r / sigma_cm) ** 2) * (ea - specfun.erfi(u * r / sigma_cm)),
                         0.0, L / 2)
    raise ValueError(f"unknown method {method!r}")


def steady_pdf_harmonic(r, L: float, sigma_cm: float, u: float, Z: float | None = None):
    """Steady density under ``U(r) = u^2 r^2 / 2``.

    ``phi(r) = exp(-u^2 r^2/sigma_cm^2) [erfi(uL/2sigma_cm) - erfi(u|r|/sigma_cm)] / Z``.
    """
    if Z is None:
        Z = harmonic_normalization(L, sigma_cm, u)
    ea = specfun.erfi(u * L / (2 * sigma_cm))
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.zeros_like(r_arr)
    inside = np.abs(r_arr) < L / 2
    x = u * np.abs(r_arr[inside]) / sigma_cm
    out[inside] = np.exp(-x * x) * (ea - _erfi_vec(x)) / Z
    return out if np.ndim(r) else float(out[0])


class ProfileKind(enum.Enum):
    TENT = "tent"
    ORDER_BOOK = "orderbook"
    GENERAL_POTENTIAL = "general"
    HARMONIC_POTENTIAL = "harmonic"
    MEAN_FIELD_NLO = "nlo"


@dataclass(frozen=True)
class AnalyticProfile:
    """An evaluable closed-form density bound to a parameter set.

    ``aux`` carries kind-specific extras: the potential callable for
    ``GENERAL_POTENTIAL``; ``epsilon`` (boundary-layer width) for
    ``MEAN_FIELD_NLO``.
    """

    kind: ProfileKind
    params: ModelParams
    aux: dict = field(default_factory=dict)

    @classmethod
    def tent(cls, params: ModelParams):
        return cls(ProfileKind.TENT, params)

    @classmethod
    def orderbook(cls, params: ModelParams):
        return cls(ProfileKind.ORDER_BOOK, params)

    @classmethod
    def harmonic(cls, params: ModelParams):
        if params.u2 <= 0:
            raise ModelError("harmonic profile needs u2 > 0")
        Z = harmonic_normalization(params.spread, math.sqrt(params.sigma_cm2), params.u)
        return cls(ProfileKind.HARMONIC_POTENTIAL, params, {"Z": Z})

    @classmethod
    def general(cls, params: ModelParams, U: Callable[[float], float]):
        sol = GeneralPotentialSolution(params.spread, params.sigma_cm2, U)
        return cls(ProfileKind.GENERAL_POTENTIAL, params, {"U": U, "solution": sol})

    @classmethod
    def nlo(cls, params: ModelParams):
        eps = params.spread / (2 * math.sqrt(params.n_traders))
        return cls(ProfileKind.MEAN_FIELD_NLO, params, {"epsilon": eps})

    @classmethod
    def steady(cls, params: ModelParams):
        """The exact two-trader steady state for ``params`` (tent or harmonic)."""
        return cls.harmonic(params) if params.u2 > 0 else cls.tent(params)

    @property
    def support(self) -> tuple[float, float]:
        L = self.params.spread
        if self.kind is ProfileKind.ORDER_BOOK:
            return 0.0, L
        if self.kind is ProfileKind.MEAN_FIELD_NLO:
            return -math.inf, math.inf
        return -L / 2, L / 2

    @property
    def kinks(self) -> tuple[float, ...]:
        L = self.params.spread
        if self.kind is ProfileKind.ORDER_BOOK:
            return 0.0, L / 2, L
        return -L / 2, 0.0, L / 2

    def __call__(self, r):
        p, L = self.params, self.params.spread
        if self.kind is ProfileKind.TENT:
            return tent_pdf(r, L)
        if self.kind is ProfileKind.ORDER_BOOK:
            return orderbook_profile(r, L)
        if self.kind is ProfileKind.HARMONIC_POTENTIAL:
            return steady_pdf_harmonic(r, L, math.sqrt(p.sigma_cm2), p.u, Z=self.aux["Z"])
        if self.kind is ProfileKind.GENERAL_POTENTIAL:
            return self.aux["solution"](r)
        return nlo_meanfield_pdf(r, L, p.n_traders)

    def cell_averages(self, grid: GridSpec) -> np.ndarray:
        """Exact average of the profile over every cell of ``grid``."""
        edges = grid.edges
        return np.array([cell_average(self, edges[k], edges[k + 1], self.kinks)
                         for k in range(grid.n_bins)])

    def to_csv(self, grid: GridSpec, path):
        """Write ``r, phi(r)`` at the cell centres of ``grid``."""
        r = grid.centers
        return write_csv(path, ["r", "phi(r)"], [r, np.asarray(self(r), dtype=float)])
