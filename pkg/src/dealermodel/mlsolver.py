"""Finite-difference solver for the reduced master-Liouville equation in ``r``.

The density ``P(r, t)`` of the relative price obeys a Fokker-Planck equation
on ``(-L/2, L/2)`` with absorbing walls at ``+-L/2``.  Every bit of
probability that leaves through a wall re-enters at ``r = 0``: that is the
transaction followed by both traders requoting at the same midprice.

Discretisation
--------------
Nodes ``r_k = k dr`` with ``P`` pinned to 0 at ``k = +-M`` (``M dr = L/2``).
Fluxes live between nodes,

    F_{k+1/2} = -(s2/2) (P_{k+1} - P_k) / dr + (b_k P_k + b_{k+1} P_{k+1}) / 2,

with ``s2 = sigma_cm^2`` and drift ``b = -U'``; then
``dP_k/dt = -(F_{k+1/2} - F_{k-1/2}) / dr``.  The two wall fluxes are removed
at the outermost interior nodes and injected into node 0 as ``flux / dr``, so
total mass is conserved to rounding.  For ``U = 0`` and ``dr = l`` the scheme
is identical to the lattice master equation with ``lambda l^2 = s2``.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Callable

import numba
import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .analytic import AnalyticProfile, cell_average
from .core import GridSpec, ModelError, ModelParams, NumericalError
from .io import fmt, write_csv

EXPLICIT_CFL = 0.25
MASS_TOL = 1e-10


@dataclass(frozen=True)
class MLField:
    """Density at the ``n_bins + 1`` nodes of ``grid`` at time ``time``."""

    grid: GridSpec
    density: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        p = np.array(self.density, dtype=float)
        if p.shape != (self.grid.n_bins + 1,):
            raise ModelError(f"density needs {self.grid.n_bins + 1} nodes, got shape {p.shape}")
        if not np.all(np.isfinite(p)):
            raise NumericalError("non-finite density")
        if p.min() < -1e-12:
            raise NumericalError(f"negative density {p.min():.3g}")
        if abs(p.sum() * self.grid.dr - 1.0) > MASS_TOL:
            raise ModelError(f"density has mass {p.sum() * self.grid.dr!r}, expected 1")
        p.setflags(write=False)
        object.__setattr__(self, "density", p)

    @classmethod
    def from_function(cls, grid: GridSpec, f: Callable, spread: float, time: float = 0.0):
        """Sample ``f`` at the interior nodes ``|r| < L/2`` and normalise."""
        r = grid.edges
        p = np.where(np.abs(r) < spread / 2 - 1e-12 * grid.dr, np.asarray(f(r), dtype=float), 0.0)
        return cls(grid, p / (p.sum() * grid.dr), time)

    @property
    def nodes(self) -> np.ndarray:
        return self.grid.edges

    @property
    def mass(self) -> float:
        return float(self.density.sum() * self.grid.dr)

    def bin_values(self) -> np.ndarray:
        """Density at the cell centres (average of the two bounding nodes)."""
        return 0.5 * (self.density[:-1] + self.density[1:])

    def __call__(self, r):
        """Piecewise-linear interpolation between nodes (0 outside the grid)."""
        return np.interp(r, self.nodes, self.density, left=0.0, right=0.0)


@dataclass(frozen=True)
class CurrentDiagnostics:
    """Probability currents of a field.

    ``j_diffusive`` and ``j_potential`` are node vectors.  The wall fluxes are
    the discrete outflows at ``+L/2`` and ``-L/2``; their sum is the
    transaction rate implied by the field.
    """

    j_diffusive: np.ndarray
    j_potential: np.ndarray
    boundary_flux_plus: float
    boundary_flux_minus: float

    @property
    def implied_rate(self) -> float:
        return self.boundary_flux_plus + self.boundary_flux_minus


class _Operator:
    """Tridiagonal flux-form operator plus the wall-to-origin injection."""

    def __init__(self, grid: GridSpec, params: ModelParams, dU: Callable | None = None):
        L = params.spread
        grid.require_ml_nodes(L)
        dr = grid.dr
        M = int(round(L / (2 * dr)))
        if M < 2:
            raise ModelError(f"dr = {dr} is too coarse: need at least 2 cells per half-spread")
        self.M, self.dr = M, dr
        self.offset = grid.node_index(-L / 2) + 1        # global index of k = -(M-1)
        self.i0 = M - 1                                   # active index of r = 0
        self.n = 2 * M - 1
        k = np.arange(-M, M + 1)                          # integer k keeps r exactly odd
        r = k * dr
        if dU is None:
            b = -params.u2 * r
        else:
            b = -np.array([float(dU(x)) for x in r])
            if np.any(np.abs(b + b[::-1]) > 1e-12 * (1 + np.abs(b))):
                raise ModelError("the potential gradient must be odd")
        self.b_full = b                                   # drift at k = -M .. M
        self.D = D = params.sigma_cm2 / 2
        c = D / dr**2
        if np.max(np.abs(b)) * dr > 2 * D:
            raise ModelError("potential too steep for this dr: off-diagonal coefficients turn negative")
        bi = b[1:-1]                                      # interior drift, k = -(M-1) .. M-1
        self.lower = c + b[:-2] / (2 * dr)                # coefficient of P_{k-1}
        self.upper = c - b[2:] / (2 * dr)                 # coefficient of P_{k+1}
        self.lower[0] = 0.0
        self.upper[-1] = 0.0
        self.diag = np.full(self.n, -2 * c)
        # outflow coefficients through the walls, re-injected at r = 0
        self.out_left = c - bi[0] / (2 * dr)
        self.out_right = c + bi[-1] / (2 * dr)
        self.sigma_cm2 = params.sigma_cm2
        A = sparse.diags([self.lower[1:], self.diag, self.upper[:-1]], [-1, 0, 1], format="lil")
        A[self.i0, 0] += self.out_left
        A[self.i0, self.n - 1] += self.out_right
        self.A = A.tocsr()

    def active(self, field: MLField) -> np.ndarray:
        return np.array(field.density[self.offset:self.offset + self.n])

    def embed(self, grid: GridSpec, P: np.ndarray) -> np.ndarray:
        out = np.zeros(grid.n_bins + 1)
        out[self.offset:self.offset + self.n] = P
        return out

    def wall_fluxes(self, P) -> tuple[float, float]:
        """``(flux_plus, flux_minus)`` out of the walls, times ``dr``."""
        return self.out_right * P[-1] * self.dr, self.out_left * P[0] * self.dr

    def rate(self, P) -> np.ndarray:
        # neighbour terms summed before the diagonal keeps mirror nodes bitwise equal
        nb = np.empty(self.n)
        nb[0] = self.upper[0] * P[1]
        nb[-1] = self.lower[-1] * P[-2]
        nb[1:-1] = self.lower[1:-1] * P[:-2] + self.upper[1:-1] * P[2:]
        d = self.diag * P + nb
        d[self.i0] += self.out_left * P[0] + self.out_right * P[-1]
        return d


@functools.lru_cache(maxsize=32)
def _cached_operator(grid: GridSpec, params: ModelParams) -> _Operator:
    return _Operator(grid, params)


def _operator(grid, params, dU=None) -> _Operator:
    return _cached_operator(grid, params) if dU is None else _Operator(grid, params, dU)


@numba.njit(cache=True)
def _explicit_steps(P, n_steps, dt, lower, diag, upper, i0, out_left, out_right, check_every,
                    tol, dr):
    """Forward-Euler steps; stops early when ``sum|dP| dr / dt < tol`` (checked every few steps).

    Returns ``(steps_done, status, last_rate_norm)``; status 0 ok, 1 converged,
    2 negative density, 3 mass drift.
    """
    n = P.size
    d = np.empty(n)
    m_prev = 0.0
    for i in range(n):
        m_prev += P[i]
    norm = np.inf
    for s in range(n_steps):
        for i in range(n):
            if i == 0:
                nb = upper[0] * P[1]
            elif i == n - 1:
                nb = lower[n - 1] * P[n - 2]
            else:
                nb = lower[i] * P[i - 1] + upper[i] * P[i + 1]
            d[i] = diag[i] * P[i] + nb
        d[i0] += out_left * P[0] + out_right * P[n - 1]
        norm_now = (s + 1) % check_every == 0
        if norm_now:
            norm = 0.0
            for i in range(n):
                norm += abs(d[i])
            norm *= dr
        m = 0.0
        for i in range(n):
            P[i] += dt * d[i]
            m += P[i]
            if P[i] < -1e-12:
                return s + 1, 2, norm
        if abs(m - m_prev) > 1e-12 * abs(m_prev):
            return s + 1, 3, norm
        m_prev = m
        if norm_now and norm < tol:
            return s + 1, 1, norm
    return n_steps, 0, norm


def max_explicit_dt(params: ModelParams, grid: GridSpec) -> float:
    return EXPLICIT_CFL * grid.dr**2 / params.sigma_cm2


def ml_step(field: MLField, params: ModelParams, dt: float, method: str = "explicit",
            dU: Callable | None = None) -> MLField:
    """Advance ``field`` by one step of size ``dt``.

    ``method="explicit"`` is forward Euler and needs
    ``dt <= 0.25 dr^2 / sigma_cm^2``; ``"implicit"`` is backward Euler and
    is unconditionally stable.  ``dU`` overrides the harmonic force
    ``U'(r) = u2 r``.
    """
    op = _operator(field.grid, params, dU)
    P = op.active(field)
    if method == "explicit":
        limit = max_explicit_dt(params, field.grid)
        if dt > limit * (1 + 1e-12):
            raise ModelError(f"dt = {dt} exceeds the explicit stability limit {limit:g}")
        rate = op.rate(P)
        injected = op.out_left * P[0] + op.out_right * P[-1]
        fp, fm = op.wall_fluxes(P)
        if abs(injected * op.dr - (fp + fm)) > 4e-16 * (fp + fm):
            raise NumericalError("injected rate differs from the wall outflow")
        new = P + dt * rate
    elif method == "implicit":
        if not dt > 0:
            raise ModelError("dt must be positive")
        lhs = (sparse.identity(op.n, format="csc") - dt * op.A.tocsc())
        new = splinalg.spsolve(lhs, P)
    else:
        raise ModelError(f"unknown method {method!r}")
    m0, m1 = P.sum(), new.sum()
    if abs(m1 - m0) > 1e-12 * abs(m0):
        raise NumericalError(f"mass changed by {m1 - m0:.3g} in one step")
    if new.min() < -1e-12:
        raise NumericalError(f"negative density {new.min():.3g}")
    return MLField(field.grid, op.embed(field.grid, new), field.time + dt)


def ml_evolve(field: MLField, params: ModelParams, dt: float, n_steps: int) -> MLField:
    """``n_steps`` explicit steps in a compiled loop; same arithmetic as :func:`ml_step`."""
    limit = max_explicit_dt(params, field.grid)
    if dt > limit * (1 + 1e-12):
        raise ModelError(f"dt = {dt} exceeds the explicit stability limit {limit:g}")
    op = _operator(field.grid, params)
    P = op.active(field)
    done, status, _ = _explicit_steps(P, int(n_steps), dt, op.lower, op.diag, op.upper, op.i0,
                                      op.out_left, op.out_right, max(int(n_steps), 1) + 1,
                                      0.0, op.dr)
    _raise_status(status, done)
    return MLField(field.grid, op.embed(field.grid, P), field.time + done * dt)


def _raise_status(status, step):
    if status == 2:
        raise NumericalError(f"negative density at step {step}")
    if status == 3:
        raise NumericalError(f"mass drift beyond rounding at step {step}")


def current_diagnostics(field: MLField, params: ModelParams, dU: Callable | None = None
                        ) -> CurrentDiagnostics:
    op = _operator(field.grid, params, dU)
    P = field.density
    r = field.nodes
    j_d = -(params.sigma_cm2 / 2) * np.gradient(P, field.grid.dr)
    force = params.u2 * r if dU is None else np.array([float(dU(x)) for x in r])
    j_p = -force * P
    fp, fm = op.wall_fluxes(op.active(field))
    if fp < 0 or fm < 0:
        raise NumericalError("negative wall outflow")
    return CurrentDiagnostics(j_d, j_p, float(fp), float(fm))


@dataclass(frozen=True)
class SteadyResult:
    field: MLField
    diagnostics: CurrentDiagnostics
    steps: int
    residual: float


def ml_steady(params: ModelParams, grid: GridSpec, tol: float = 1e-10, method: str = "explicit",
              dt: float | None = None, max_steps: int = 50_000_000, check_every: int = 200,
              ) -> tuple[MLField, CurrentDiagnostics]:
    """Steady state of the reduced ML equation.

    ``method="explicit"`` iterates forward Euler in pseudo-time from a flat
    profile until ``sum|dP/dt| dr < tol``.  ``method="direct"`` solves the
    sparse linear system with one balance row replaced by normalisation.
    """
    res = ml_steady_result(params, grid, tol, method, dt, max_steps, check_every)
    return res.field, res.diagnostics


def ml_steady_result(params: ModelParams, grid: GridSpec, tol: float = 1e-10,
                     method: str = "explicit", dt: float | None = None,
                     max_steps: int = 50_000_000, check_every: int = 200):
    """Like :func:`ml_steady` but also returns the step count and final residual."""
    if not tol > 0:
        raise ModelError("tol must be positive")
    op = _operator(grid, params)
    if method == "explicit":
        dt = max_explicit_dt(params, grid) if dt is None else dt
        if dt > max_explicit_dt(params, grid) * (1 + 1e-12):
            raise ModelError(f"dt = {dt} exceeds the explicit stability limit")
        P = np.full(op.n, 1.0 / (op.n * op.dr))
        done, status, norm = _explicit_steps(P, int(max_steps), dt, op.lower, op.diag, op.upper,
                                             op.i0, op.out_left, op.out_right, int(check_every),
                                             tol, op.dr)
        _raise_status(status, done)
        if status != 1:
            raise NumericalError(f"no convergence in {max_steps} steps (residual {norm:.3g})")
        P /= P.sum() * op.dr
    elif method == "direct":
        A = op.A.tolil()
        A[op.i0, :] = op.dr
        rhs = np.zeros(op.n)
        rhs[op.i0] = 1.0
        P = splinalg.spsolve(A.tocsr(), rhs)
        done = 0
        if P.min() < -1e-12:
            raise NumericalError("direct solve produced negative density")
        P = np.maximum(P, 0.0)
    else:
        raise ModelError(f"unknown method {method!r}")
    field = MLField(grid, op.embed(grid, P), 0.0)
    residual = float(np.sum(np.abs(op.rate(P))) * op.dr)
    return SteadyResult(field, current_diagnostics(field, params), done, residual)


def boundary_condition_check(field: MLField, spread: float) -> tuple[float, float]:
    """One-sided derivative residuals ``|d+P(0) - d-P(L/2)|`` and ``|d+P(L/2)|``."""
    g, P = field.grid, field.density
    i0, iw = g.node_index(0.0), g.node_index(spread / 2)
    dr = g.dr
    d_plus_0 = (P[i0 + 1] - P[i0]) / dr
    d_minus_w = (P[iw] - P[iw - 1]) / dr
    d_plus_w = (P[iw + 1] - P[iw]) / dr if iw < g.n_bins else 0.0
    return float(abs(d_plus_0 - d_minus_w)), float(abs(d_plus_w))


def sup_distance(field: MLField, profile: AnalyticProfile) -> tuple[float, float]:
    """``(cell_sup, nodal_sup)`` distance between a field and a closed-form profile.

    ``cell_sup`` compares each node with the average of the profile over its
    control cell ``[r_k - dr/2, r_k + dr/2]``, restricted to ``|r_k| <= L/2``;
    ``nodal_sup`` compares with the profile sampled at the nodes.
    """
    L = profile.params.spread
    r, P, h = field.nodes, field.density, field.grid.dr
    sel = np.abs(r) <= L / 2 + 1e-12 * h
    cells = np.array([cell_average(profile, x - h / 2, x + h / 2, profile.kinks) for x in r[sel]])
    exact = np.asarray(profile(r[sel]), dtype=float)
    return float(np.max(np.abs(P[sel] - cells))), float(np.max(np.abs(P[sel] - exact)))


def richardson_ratio(params: ModelParams, dr_values=(0.04, 0.02, 0.01), r_lim: float = 3.0,
                     method: str = "direct", tol: float = 1e-10) -> tuple[list[float], list[float]]:
    """Cell-based sup errors against the exact steady state for successive ``dr`` and their ratios."""
    profile = AnalyticProfile.steady(params)
    errors = []
    for h in dr_values:
        g = GridSpec(-r_lim, r_lim, h)
        f, _ = ml_steady(params, g, tol=tol, method=method)
        errors.append(sup_distance(f, profile)[0])
    ratios = [a / b for a, b in zip(errors, errors[1:])]
    return errors, ratios


def field_to_csv(field: MLField, diagnostics: CurrentDiagnostics, path):
    d = diagnostics
    summary = (f"# boundary_flux_plus={fmt(d.boundary_flux_plus)},"
               f"boundary_flux_minus={fmt(d.boundary_flux_minus)},implied_rate={fmt(d.implied_rate)}")
    return write_csv(path, ["r", "P(r)", "j_diffusive(r)", "j_potential(r)"],
                     [field.nodes, field.density, d.j_diffusive, d.j_potential], footer=[summary])
