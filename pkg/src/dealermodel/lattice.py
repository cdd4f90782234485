"""Lattice random walk with return-to-origin barriers.

The relative price lives on the sites ``r = k l`` with
``k = -(n_bar - 1), ..., n_bar - 1``.  In a short interval ``dt`` the walker
hops one site right or left, each with probability ``(lambda/2) dt``.  A hop
that would reach ``|k| = n_bar`` (the barrier at ``|r| = L/2``) is a
transaction and sends the walker back to the origin instead.

The master equation is a linear ODE ``dP/dt = Q P`` on ``2 n_bar - 1``
states.  Its steady state is the discrete tent ``P_k = (n_bar - |k|) / n_bar^2``.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .analytic import cell_average, tent_pdf
from .core import ModelError, NumericalError
from .io import write_csv
from .simulator import make_generator


@dataclass(frozen=True)
class LatticeParams:
    """Spacing ``l``, total hop intensity ``lambda_`` and barrier index ``n_bar``."""

    l: float
    lambda_: float
    n_bar: int

    def __post_init__(self):
        if not (self.l > 0 and math.isfinite(self.l)):
            raise ModelError(f"lattice spacing must be positive, got {self.l!r}")
        if not (self.lambda_ > 0 and math.isfinite(self.lambda_)):
            raise ModelError(f"lambda must be positive, got {self.lambda_!r}")
        if int(self.n_bar) != self.n_bar or self.n_bar < 2:
            raise ModelError(f"n_bar must be an integer >= 2, got {self.n_bar!r}")

    @classmethod
    def diffusive(cls, sigma_cm2: float, L: float, n_bar: int) -> "LatticeParams":
        """Parameters on the diffusive-limit line ``lambda l^2 = sigma_cm^2``, ``l n_bar = L/2``."""
        l = L / (2 * n_bar)
        return cls(l, sigma_cm2 / (l * l), n_bar)

    @property
    def n_states(self) -> int:
        return 2 * self.n_bar - 1

    @property
    def sites(self) -> np.ndarray:
        """Integer site labels ``-(n_bar-1) .. n_bar-1``."""
        return np.arange(-(self.n_bar - 1), self.n_bar)

    @property
    def positions(self) -> np.ndarray:
        return self.sites * self.l

    @property
    def half_spread(self) -> float:
        return self.l * self.n_bar


@dataclass(frozen=True)
class LatticeDistribution:
    """Probabilities of the ``2 n_bar - 1`` sites, ordered from ``-(n_bar-1)`` upwards."""

    params: LatticeParams
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (self.params.n_states,):
            raise ModelError(f"expected {self.params.n_states} probabilities, got shape {p.shape}")
        if np.any(p < -1e-12):
            raise ModelError("negative probability")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ModelError(f"probabilities sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "probs", p)

    @classmethod
    def delta(cls, params: LatticeParams, site: int = 0) -> "LatticeDistribution":
        p = np.zeros(params.n_states)
        p[_index(site, params)] = 1.0
        return cls(params, p)

    @property
    def density(self) -> np.ndarray:
        """Probability per unit price, ``P_k / l``."""
        return self.probs / self.params.l

    def __getitem__(self, site: int) -> float:
        return float(self.probs[_index(site, self.params)])

    def to_csv(self, path):
        p = self.params
        return write_csv(path, ["site_index", "r", "probability", "density"],
                         [p.sites, p.positions, self.probs, self.density])


def _index(site: int, params: LatticeParams) -> int:
    m = params.n_bar - 1
    if int(site) != site or abs(site) > m:
        raise ModelError(f"site {site!r} is outside the state space [-{m}, {m}]")
    return int(site) + m


def generator_matrix(params: LatticeParams) -> np.ndarray:
    """Rate matrix ``Q`` with ``dP/dt = Q P``; every column sums to exactly zero."""
    m, n = params.n_bar - 1, params.n_states
    half = params.lambda_ / 2
    Q = np.zeros((n, n))
    for j, k in enumerate(params.sites):
        Q[j, j] = -params.lambda_
        for target in (k + 1, k - 1):
            if abs(target) > m:
                target = 0  # crossing the barrier: transaction, back to the origin
            Q[target + m, j] += half
    return Q


def lattice_step(site: int, params: LatticeParams, rng, dt: float) -> int:
    """One fixed-``dt`` move of the walker.

    A single uniform draw ``u`` decides: ``u < p`` hops right, ``p <= u < 2p``
    hops left (``p = lambda dt / 2``), otherwise the walker stays.  A hop
    outward from an edge site returns the walker to 0.
    """
    _index(site, params)
    p = params.lambda_ * dt / 2
    if not 0 < 2 * p <= 0.1:
        raise ModelError(f"lambda*dt = {2 * p} must lie in (0, 0.1]")
    u = rng.random()
    if u < p:
        new = site + 1
    elif u < 2 * p:
        new = site - 1
    else:
        return site
    return 0 if abs(new) >= params.n_bar else new


def lattice_steady_state(params: LatticeParams) -> LatticeDistribution:
    """Null vector of ``Q`` by a direct solve, with one balance row replaced by normalisation."""
    Q = generator_matrix(params)
    A = Q.copy()
    A[0, :] = 1.0
    b = np.zeros(params.n_states)
    b[0] = 1.0
    try:
        p = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular lattice generator: {exc}") from exc
    if np.max(np.abs(Q @ p)) > 1e-10 * params.lambda_:
        raise NumericalError("steady-state residual too large")
    return LatticeDistribution(params, p)


def lattice_transient(initial: LatticeDistribution, params: LatticeParams, t_final: float,
                      dt_ode: float) -> LatticeDistribution:
    """Integrate the master equation from ``initial`` to ``t_final`` with classical RK4.

    The step is ``t_final / ceil(t_final / dt_ode)``.  Total probability is
    checked after every step.
    """
    if dt_ode * params.lambda_ > 0.5:
        raise ModelError(f"dt_ode*lambda = {dt_ode * params.lambda_} exceeds the RK4 limit 0.5")
    if t_final < 0 or not dt_ode > 0:
        raise ModelError("need t_final >= 0 and dt_ode > 0")
    Q = generator_matrix(params)
    P = initial.probs.copy()
    n = math.ceil(t_final / dt_ode) if t_final > 0 else 0
    h = t_final / n if n else 0.0
    for _ in range(n):
        k1 = Q @ P
        k2 = Q @ (P + 0.5 * h * k1)
        k3 = Q @ (P + 0.5 * h * k2)
        k4 = Q @ (P + h * k3)
        P = P + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)
        if abs(P.sum() - 1.0) > 1e-12:
            raise NumericalError(f"mass drifted to {P.sum()!r} during integration")
    return LatticeDistribution(params, P)


# ---------------------------------------------------------------------------
# Monte Carlo

@numba.njit(cache=True)
def _walk_events(gen, k, m, n_events, stride, counts, lam):
    t = 0.0
    for e in range(n_events):
        if e % stride == 0:
            counts[k + m] += 1
        t += gen.standard_exponential() / lam
        if gen.random() < 0.5:
            k += 1
        else:
            k -= 1
        if k > m or k < -m:
            k = 0
    return k, t


@numba.njit(cache=True)
def _walk_fixed(gen, k, m, n_steps, stride, counts, p):
    for s in range(n_steps):
        if s % stride == 0:
            counts[k + m] += 1
        u = gen.random()
        if u < p:
            k += 1
        elif u < 2 * p:
            k -= 1
        else:
            continue
        if k > m or k < -m:
            k = 0
    return k


@dataclass
class LatticeMCResult:
    """Site occupation counts recorded every ``stride`` moves."""

    params: LatticeParams
    counts: np.ndarray
    elapsed: float = 0.0
    n_runs: int = 1
    mode: str = "event"

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum())

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.counts.sum()

    def merge(self, other: "LatticeMCResult") -> "LatticeMCResult":
        if other.params != self.params or other.mode != self.mode:
            raise ModelError("cannot merge lattice runs with different parameters or modes")
        return LatticeMCResult(self.params, self.counts + other.counts,
                               self.elapsed + other.elapsed, self.n_runs + other.n_runs, self.mode)

    def to_csv(self, path):
        p = self.params
        freq = self.frequencies
        return write_csv(path, ["site_index", "r", "probability", "density"],
                         [p.sites, p.positions, freq, freq / p.l])


def lattice_monte_carlo(params: LatticeParams, n_moves: int, seed: int = 12345, run_index: int = 0,
                        mode: str = "event", dt: float | None = None, stride: int = 1,
                        start: int = 0) -> LatticeMCResult:
    """Simulate the walker and histogram the visited sites.

    Parameters
    ----------
    n_moves
        Number of jumps (``mode="event"``) or fixed timesteps (``mode="fixed"``).
    mode
        ``"event"`` draws exponential waiting times at total rate ``lambda``
        and an unbiased direction; ``"fixed"`` applies :func:`lattice_step`'s
        Bernoulli rule with timestep ``dt``.
    stride
        Record the site every ``stride`` moves (thinning reduces the
        autocorrelation of the recorded samples).
    """
    if n_moves < 1 or stride < 1:
        raise ModelError("n_moves and stride must be positive")
    gen = make_generator(seed, run_index)
    m = params.n_bar - 1
    k0 = _index(start, params) - m
    counts = np.zeros(params.n_states, dtype=np.int64)
    if mode == "event":
        _, t = _walk_events(gen, k0, m, int(n_moves), int(stride), counts, params.lambda_)
    elif mode == "fixed":
        if dt is None:
            dt = 0.05 / params.lambda_
        p = params.lambda_ * dt / 2
        if not 0 < 2 * p <= 0.1:
            raise ModelError(f"lambda*dt = {2 * p} must lie in (0, 0.1]")
        _walk_fixed(gen, k0, m, int(n_moves), int(stride), counts, p)
        t = n_moves * dt
    else:
        raise ModelError(f"unknown lattice Monte Carlo mode {mode!r}")
    return LatticeMCResult(params, counts, float(t), 1, mode)


def _mc_indexed(args):
    params, n_moves, seed, i, kw = args
    return lattice_monte_carlo(params, n_moves, seed, i, **kw)


def lattice_ensemble(params: LatticeParams, n_moves: int, n_runs: int, seed: int = 12345,
                     workers: int | None = None, **kw) -> LatticeMCResult:
    """Independent replicas ``0 .. n_runs-1`` merged by adding counts."""
    if workers is None:
        workers = int(os.environ.get("DEALERMODEL_THREADS", "1"))
    jobs = [(params, n_moves, seed, i, kw) for i in range(n_runs)]
    if workers > 1 and n_runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_mc_indexed, jobs))
    else:
        results = [_mc_indexed(j) for j in jobs]
    out = results[0]
    for r in results[1:]:
        out = out.merge(r)
    return out


def embedded_mixing_stride(params: LatticeParams, target: float = 0.01) -> int:
    """Odd number of jumps after which correlations of the jump chain fall below ``target``.

    Every jump changes the parity of the site, so the jump chain has the
    eigenvalue -1.  That mode never decays; an odd stride makes consecutive
    samples alternate between the parity classes, which keeps their
    frequencies balanced.  The stride is set by the largest remaining
    eigenvalue modulus.
    """
    P = np.eye(params.n_states) + generator_matrix(params) / params.lambda_
    mod = np.sort(np.abs(np.linalg.eigvals(P)))[::-1]
    rest = mod[mod < 1 - 1e-9]
    if rest.size == 0 or rest[0] == 0:
        return 1
    s = max(1, math.ceil(math.log(target) / math.log(rest[0])))
    return s if s % 2 else s + 1


# ---------------------------------------------------------------------------
# Diffusive limit

@dataclass(frozen=True)
class DiffusiveLimitRow:
    n_bar: int
    l: float
    lambda_: float
    sup_error: float
    nodal_error: float

    @property
    def scaled_error(self) -> float:
        return self.sup_error * self.n_bar


@dataclass(frozen=True)
class DiffusiveLimitTable:
    rows: list = field(default_factory=list)

    @property
    def monotone(self) -> bool:
        e = [r.sup_error for r in self.rows]
        return all(a > b for a, b in zip(e, e[1:]))

    @property
    def max_scaled_error(self) -> float:
        return max(r.scaled_error for r in self.rows)

    def to_csv(self, path):
        rows = self.rows
        return write_csv(path, ["n_bar", "l", "lambda", "sup_error", "scaled_error", "nodal_error"],
                         [[r.n_bar for r in rows], [r.l for r in rows], [r.lambda_ for r in rows],
                          [r.sup_error for r in rows], [r.scaled_error for r in rows],
                          [r.nodal_error for r in rows]])


def diffusive_limit_check(sigma_cm2: float, L: float, levels=(4, 8, 16, 32)) -> DiffusiveLimitTable:
    """Compare ``P_k / l`` with the tent as the lattice is refined.

    ``sup_error`` is the largest deviation of ``P_k / l`` from the average of
    the tent over the cell ``[r_k - l/2, r_k + l/2]``; it is first order in
    ``l`` because of the kink at the origin.  ``nodal_error`` compares with
    the tent sampled at the sites; the discrete tent coincides with the
    continuum one there, so this column sits at rounding level.
    """
    levels = list(levels)
    if len(levels) < 3:
        raise ModelError("need at least three refinement levels")
    rows = []
    for n_bar in levels:
        p = LatticeParams.diffusive(sigma_cm2, L, n_bar)
        dens = lattice_steady_state(p).density
        r = p.positions
        cells = np.array([cell_average(lambda x: tent_pdf(x, L), x - p.l / 2, x + p.l / 2, (0.0,))
                          for x in r])
        rows.append(DiffusiveLimitRow(n_bar, p.l, p.lambda_,
                                      float(np.max(np.abs(dens - cells))),
                                      float(np.max(np.abs(dens - tent_pdf(r, L))))))
    return DiffusiveLimitTable(rows)
