"""Domain types and coordinate transformations for the stochastic dealer model.

Every trader quotes a bid and an ask separated by a common spread ``L``; the
midprice ``z_i`` is the average of the two.  For two traders the dynamics is
most naturally written in the centre-of-mass / relative coordinates

    z_cm = (z1 + z2) / 2,      r = (z1 - z2) / 2,

in which a transaction happens when ``|r|`` reaches ``L/2`` and sends ``r``
back to the origin while leaving ``z_cm`` untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


class ModelError(ValueError):
    """Invalid parameters or state for the dealer model."""


class NumericalError(RuntimeError):
    """A numerical procedure failed (instability, non-convergence, overflow)."""


@dataclass(frozen=True)
class ModelParams:
    """Physical parameters of the dealer model.

    Parameters
    ----------
    n_traders : int
        Number of traders ``N`` (at least 2).
    spread : float
        Common bid-ask spread ``L`` (price).
    sigma2 : float
        Variance rate ``sigma**2`` of each midprice random walk (price**2/time).
    u2 : float
        Strength ``u**2`` of the harmonic attraction to the market midprice
        (1/time). Zero switches the interaction off.
    """

    n_traders: int = 2
    spread: float = 2.0
    sigma2: float = 1.0
    u2: float = 0.0

    def __post_init__(self):
        if int(self.n_traders) != self.n_traders or self.n_traders < 2:
            raise ModelError(f"n_traders must be an integer >= 2, got {self.n_traders!r}")
        if not (math.isfinite(self.spread) and self.spread > 0):
            raise ModelError(f"spread L must be positive, got {self.spread!r}")
        if not (math.isfinite(self.sigma2) and self.sigma2 > 0):
            raise ModelError(f"sigma2 must be positive, got {self.sigma2!r}")
        if not (math.isfinite(self.u2) and self.u2 >= 0):
            raise ModelError(f"u2 must be non-negative, got {self.u2!r}")
        object.__setattr__(self, "n_traders", int(self.n_traders))

    @property
    def sigma_cm2(self) -> float:
        """Relative-coordinate variance rate ``sigma**2 / 2`` (exact for N = 2)."""
        return self.sigma2 / 2.0

    @property
    def u(self) -> float:
        return math.sqrt(self.u2)


@dataclass(frozen=True)
class MarketState:
    """Midprices of all traders at time ``time``."""

    midprices: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        z = np.array(self.midprices, dtype=np.float64)
        if z.ndim != 1 or z.size < 2:
            raise ModelError("midprices must be a 1-d vector of at least two prices")
        if not np.all(np.isfinite(z)):
            raise ModelError(f"non-finite midprice in state at t={self.time}: {z}")
        z.setflags(write=False)
        object.__setattr__(self, "midprices", z)

    @property
    def n_traders(self) -> int:
        return self.midprices.size

    @property
    def z_cm(self) -> float:
        return float(np.mean(self.midprices))

    def relative_prices(self) -> np.ndarray:
        """``z_i - z_cm`` for every trader."""
        return self.midprices - self.z_cm

    def bids(self, spread: float) -> np.ndarray:
        return self.midprices - spread / 2

    def asks(self, spread: float) -> np.ndarray:
        return self.midprices + spread / 2


@dataclass(frozen=True)
class TransactionEvent:
    """A single trade: the buyer's bid met the seller's ask at ``price``."""

    time: float
    buyer_index: int
    seller_index: int
    price: float
    taker_index: int

    def __post_init__(self):
        if self.taker_index not in (self.buyer_index, self.seller_index):
            raise ModelError("taker must be either the buyer or the seller")
        if self.buyer_index == self.seller_index:
            raise ModelError("a trader cannot trade with itself")


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid of ``n_bins`` cells ``[r_k, r_k + dr)`` covering ``[r_min, r_max)``.

    The ``n_bins + 1`` cell edges double as the nodes of the finite-difference
    solver.
    """

    r_min: float = -3.0
    r_max: float = 3.0
    dr: float = 1e-2
    n_bins: int = field(init=False)

    def __post_init__(self):
        if not (self.dr > 0 and math.isfinite(self.dr)):
            raise ModelError(f"dr must be positive, got {self.dr!r}")
        if not self.r_max > self.r_min:
            raise ModelError("r_max must exceed r_min")
        ratio = (self.r_max - self.r_min) / self.dr
        n = int(round(ratio))
        if abs(ratio - n) > 1e-9 * max(1.0, ratio):
            raise ModelError(
                f"(r_max - r_min) = {self.r_max - self.r_min} is not a multiple of dr = {self.dr}")
        if n < 8:
            raise ModelError(f"grid needs at least 8 bins, got {n}")
        object.__setattr__(self, "n_bins", n)

    @property
    def edges(self) -> np.ndarray:
        return self.r_min + self.dr * np.arange(self.n_bins + 1)

    @property
    def centers(self) -> np.ndarray:
        return self.r_min + self.dr * (np.arange(self.n_bins) + 0.5)

    def node_index(self, r: float) -> int:
        """Index of the node at ``r``; raises if ``r`` is not (close to) a node."""
        k = (r - self.r_min) / self.dr
        i = int(round(k))
        if abs(k - i) > 1e-9 or not 0 <= i <= self.n_bins:
            raise ModelError(f"r = {r} is not a node of {self}")
        return i

    def same_as(self, other: "GridSpec") -> bool:
        return (self.n_bins == other.n_bins
                and math.isclose(self.r_min, other.r_min, rel_tol=0, abs_tol=1e-12 * self.dr)
                and math.isclose(self.dr, other.dr, rel_tol=1e-12))

    def require_ml_nodes(self, spread: float):
        """Check that ``0`` and ``+-L/2`` are grid nodes (needed by the ML solver)."""
        for r in (-spread / 2, 0.0, spread / 2):
            self.node_index(r)


@dataclass(frozen=True)
class SimSchedule:
    """Time discretisation and seeding of a Monte Carlo run."""

    dt: float = 1e-4
    t_init: float = 20.0
    t_end: float = 1e4
    seed: int = 12345
    n_runs: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ModelError(f"dt must be positive, got {self.dt!r}")
        if self.t_init < 0:
            raise ModelError(f"t_init must be non-negative, got {self.t_init!r}")
        if not self.t_end > 0:
            raise ModelError(f"t_end must be positive, got {self.t_end!r}")
        if self.n_runs < 1:
            raise ModelError("n_runs must be at least 1")
        if not 0 <= int(self.seed) < 2**64:
            raise ModelError("seed must fit in an unsigned 64-bit integer")

    def check_stable(self, params: ModelParams):
        """Keep the per-step displacement small compared with the spread."""
        limit = 1e-2 * min(1.0, params.spread**2 / params.sigma2)
        if self.dt > limit:
            raise ModelError(f"dt = {self.dt} exceeds the stability guard {limit:g}")

    @property
    def n_init_steps(self) -> int:
        return int(round(self.t_init / self.dt))

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


def default_dt(n_traders: int) -> float:
    """Timestep used for the reference runs: ``1e-4 / sqrt(N/2)``."""
    return 1e-4 / math.sqrt(n_traders / 2)


def to_cm_relative(state: MarketState) -> tuple[float, float]:
    """Return ``(z_cm, r)`` for a two-trader state."""
    if state.n_traders != 2:
        raise ModelError(f"centre-of-mass/relative split needs N = 2, got N = {state.n_traders}")
    z1, z2 = state.midprices
    return float((z1 + z2) / 2), float((z1 - z2) / 2)


def from_cm_relative(z_cm: float, r: float, time: float = 0.0) -> MarketState:
    return MarketState(np.array([z_cm + r, z_cm - r]), time)


def resolve_transaction(zi: float, zj: float, spread: float) -> tuple[float, float, float]:
    """Apply the requote jump to a crossed pair.

    Both traders move their midprices to the pair midpoint, which is also the
    transaction price.  The pair's centre of mass is unchanged.
    """
    if abs(zi - zj) < spread:
        raise ModelError(f"no crossing: |{zi} - {zj}| < L = {spread}")
    mid = (zi + zj) / 2
    return mid, mid, mid
