"""Monte Carlo engine for the N-trader dealer model.

Each timestep every midprice takes an Euler-Maruyama step

    z_i <- z_i - u^2 (z_i - z_M) dt + sigma sqrt(dt) xi_i,   z_M = mean(z),

after which, if the highest bid meets the lowest ask (``max z - min z >= L``),
that single pair trades and both traders requote at the pair midpoint.  The
relative prices ``z_i - z_cm`` of all traders are histogrammed at every
sampling step ``t_k in [0, T_end)``; the warm-up ``[-T_ini, 0)`` is discarded.

The inner loop is compiled with numba and draws its normals from a numpy
``Generator`` in place, so it reproduces :func:`step` bit for bit.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .core import (GridSpec, MarketState, ModelError, ModelParams, NumericalError,
                   SimSchedule, TransactionEvent)
from .io import write_csv
from .stats import DensityEstimate

_CHUNK_STEPS = 1 << 20


def make_generator(seed: int, run_index: int = 0) -> np.random.Generator:
    """Independent stream for run ``run_index`` of an ensemble seeded with ``seed``.

    Streams are derived with ``SeedSequence(seed, spawn_key=(run_index,))`` so a
    run's randomness depends only on ``(seed, run_index)``.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(run_index),))
    return np.random.Generator(np.random.SFC64(ss))


def step(state: MarketState, params: ModelParams, dt: float, rng,
         increments: Sequence[float] | None = None):
    """Advance ``state`` by one timestep.

    ``increments`` replaces the Gaussian kicks ``sigma sqrt(dt) xi`` (useful
    for scripted tests); otherwise they are drawn from ``rng``.  Returns the
    new state and the transaction that occurred, if any.  The taker is the
    trader of the pair that moved further during the step; exact ties are
    settled by a fair coin from ``rng``.
    """
    z = np.array(state.midprices, dtype=np.float64)
    n = z.size
    z_m = 0.0
    for v in z:  # sequential sum, same rounding as the compiled loop
        z_m += v
    z_m /= n
    if increments is None:
        kicks = math.sqrt(params.sigma2 * dt) * rng.standard_normal(n)
    else:
        kicks = np.asarray(increments, dtype=np.float64)
        if kicks.shape != (n,):
            raise ModelError(f"need {n} increments, got {kicks.shape}")
    disp = kicks if params.u2 == 0 else -params.u2 * dt * (z - z_m) + kicks
    z = z + disp
    if not np.all(np.isfinite(z)):
        raise NumericalError(f"non-finite midprice after step at t={state.time + dt}: {z}")
    i_hi, i_lo = int(np.argmax(z)), int(np.argmin(z))
    t_new = state.time + dt
    event = None
    if z[i_hi] - z[i_lo] >= params.spread:
        mid = (z[i_hi] + z[i_lo]) / 2
        z[i_hi] = z[i_lo] = mid
        a, b = abs(disp[i_hi]), abs(disp[i_lo])
        if a > b:
            taker = i_hi
        elif b > a:
            taker = i_lo
        else:
            taker = i_hi if rng.random() < 0.5 else i_lo
        # the trader with the highest midprice owns the highest bid: it buys
        event = TransactionEvent(t_new, i_hi, i_lo, float(mid), taker)
    return MarketState(z, t_new), event


@numba.njit(cache=True)
def _advance(z, gen, k, k_stop, dt, sigma_sqdt, u2dt, spread,
             r_min, inv_dr, n_bins, counts, outside, joint, record_joint,
             ev_time, ev_buyer, ev_seller, ev_price, ev_taker, n_ev, record_events,
             com, n_com, com_stride):
    """Run steps ``k .. k_stop-1``; returns ``(k_next, n_ev, n_com, status)``.

    status 0: done, 1: event buffer full, 2: non-finite state.
    """
    n = z.size
    disp = np.empty(n)
    jb = np.zeros(2, dtype=np.int64)
    cap = ev_time.size
    # running sequential sum of z, refreshed inside the update loop (same rounding as step())
    while k < k_stop:
        if record_events and n_ev >= cap:
            return k, n_ev, n_com, 1
        zc = 0.0
        for i in range(n):
            zc += z[i]
        zc /= n
        if k >= 0:
            if k % com_stride == 0:
                com[n_com] = zc
                n_com += 1
            off = zc + r_min
            inside = True
            for i in range(n):
                x = (z[i] - off) * inv_dr
                if x < 0.0:
                    outside[0] += 1
                    inside = False
                else:
                    b = int(x)
                    if b >= n_bins:
                        outside[1] += 1
                        inside = False
                    else:
                        counts[b] += 1
                        if record_joint:
                            jb[i] = b
            if record_joint and inside:
                joint[jb[0], jb[1]] += 1
        if u2dt != 0.0:
            for i in range(n):
                disp[i] = -u2dt * (z[i] - zc) + sigma_sqdt * gen.standard_normal()
        else:
            for i in range(n):
                disp[i] = sigma_sqdt * gen.standard_normal()
        hi = 0
        lo = 0
        zsum = 0.0
        for i in range(n):
            z[i] += disp[i]
            if z[i] > z[hi]:
                hi = i
            if z[i] < z[lo]:
                lo = i
        if not (math.isfinite(z[hi]) and math.isfinite(z[lo])):
            return k, n_ev, n_com, 2
        if z[hi] - z[lo] >= spread:
            mid = (z[hi] + z[lo]) / 2
            z[hi] = mid
            z[lo] = mid
            if record_events and k >= 0:
                a = abs(disp[hi])
                c = abs(disp[lo])
                if a > c:
                    taker = hi
                elif c > a:
                    taker = lo
                elif gen.random() < 0.5:
                    taker = hi
                else:
                    taker = lo
                ev_time[n_ev] = (k + 1) * dt
                ev_buyer[n_ev] = hi
                ev_seller[n_ev] = lo
                ev_price[n_ev] = mid
                ev_taker[n_ev] = taker
                n_ev += 1
        k += 1
    return k, n_ev, n_com, 0


class EventLog:
    """Columnar record of transactions, possibly from several independent runs."""

    def __init__(self, time, buyer, seller, price, taker, run=None):
        self.time = np.asarray(time, dtype=np.float64)
        self.buyer = np.asarray(buyer, dtype=np.int64)
        self.seller = np.asarray(seller, dtype=np.int64)
        self.price = np.asarray(price, dtype=np.float64)
        self.taker = np.asarray(taker, dtype=np.int64)
        self.run = (np.zeros(self.time.size, dtype=np.int64) if run is None
                    else np.asarray(run, dtype=np.int64))

    @classmethod
    def empty(cls):
        return cls([], [], [], [], [])

    @classmethod
    def from_events(cls, events: Sequence[TransactionEvent]):
        return cls([e.time for e in events], [e.buyer_index for e in events],
                   [e.seller_index for e in events], [e.price for e in events],
                   [e.taker_index for e in events])

    def __len__(self):
        return self.time.size

    def __getitem__(self, i) -> TransactionEvent:
        return TransactionEvent(float(self.time[i]), int(self.buyer[i]), int(self.seller[i]),
                                float(self.price[i]), int(self.taker[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other):
        return isinstance(other, EventLog) and all(
            np.array_equal(getattr(self, c), getattr(other, c))
            for c in ("time", "buyer", "seller", "price", "taker", "run"))

    def intervals(self) -> np.ndarray:
        """Waiting times between successive events of the same run."""
        same = self.run[1:] == self.run[:-1]
        return np.diff(self.time)[same]

    @staticmethod
    def concat(logs: Sequence["EventLog"], runs: Sequence[int]):
        if not logs:
            return EventLog.empty()
        cols = {c: np.concatenate([getattr(g, c) for g in logs])
                for c in ("time", "buyer", "seller", "price", "taker")}
        run = np.concatenate([np.full(len(g), r, dtype=np.int64) for g, r in zip(logs, runs)])
        return EventLog(run=run, **cols)

    def to_csv(self, path):
        return write_csv(path, ["time", "buyer", "seller", "price", "taker"],
                         [self.time, self.buyer, self.seller, self.price, self.taker])


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    schedule: SimSchedule
    grid: GridSpec = field(default_factory=GridSpec)
    record_joint: bool = False
    record_events: bool = True
    com_stride: int = 100

    def __post_init__(self):
        L = self.params.spread
        if self.grid.r_min > -L + 1e-12 or self.grid.r_max < L - 1e-12:
            raise ModelError(f"histogram grid must cover [-L, L] = [{-L}, {L}]")
        if self.record_joint and self.params.n_traders != 2:
            raise ModelError("joint histogram is only defined for N = 2")
        if self.com_stride < 1:
            raise ModelError("com_stride must be positive")


@dataclass
class RunResult:
    """Output of one run (or a merged ensemble).

    ``joint_hist`` counts ``(z1 - z_cm, z2 - z_cm)`` pairs on ``grid x grid``;
    ``com_series`` samples ``z_cm`` every ``com_stride`` steps (single runs only).
    """

    pdf_r: DensityEstimate
    events: EventLog
    n_steps: int
    com_series: np.ndarray | None = None
    com_dt: float | None = None
    joint_hist: np.ndarray | None = None
    n_runs: int = 1

    def joint_marginal_r(self) -> DensityEstimate:
        """The r-histogram implied by the joint histogram (both traders' coordinates)."""
        if self.joint_hist is None:
            raise ModelError("run was made without record_joint")
        w = self.joint_hist.sum(axis=1) + self.joint_hist.sum(axis=0)
        return DensityEstimate(self.pdf_r.grid, w, int(w.sum()))

    def com_to_csv(self, path):
        if self.com_series is None:
            raise ModelError("no centre-of-mass trace recorded")
        t = np.arange(self.com_series.size) * self.com_dt
        return write_csv(path, ["t", "z_cm"], [t, self.com_series])


def run(config: RunConfig, run_index: int = 0) -> RunResult:
    """Simulate ``[-T_ini, T_end)`` and return histograms, events and the COM trace."""
    p, s, g = config.params, config.schedule, config.grid
    s.check_stable(p)
    gen = make_generator(s.seed, run_index)
    n = p.n_traders
    z = np.zeros(n)
    k0, k_end = -s.n_init_steps, s.n_steps
    counts = np.zeros(g.n_bins, dtype=np.int64)
    outside = np.zeros(2, dtype=np.int64)
    joint = np.zeros((g.n_bins, g.n_bins) if config.record_joint else (1, 1), dtype=np.int64)
    com = np.empty(k_end // config.com_stride + 1)
    n_com = 0
    cap = 4096 if config.record_events else 1
    ev = [np.empty(cap), np.empty(cap, np.int64), np.empty(cap, np.int64), np.empty(cap),
          np.empty(cap, np.int64)]
    n_ev = 0
    k = k0
    while k < k_end:
        k_stop = min(k_end, k + _CHUNK_STEPS)
        k, n_ev, n_com, status = _advance(
            z, gen, k, k_stop, s.dt, math.sqrt(p.sigma2 * s.dt), p.u2 * s.dt, p.spread,
            g.r_min, 1.0 / g.dr, g.n_bins, counts, outside, joint, config.record_joint,
            ev[0], ev[1], ev[2], ev[3], ev[4], n_ev, config.record_events,
            com, n_com, config.com_stride)
        if status == 1:
            ev = [np.concatenate([a, np.empty_like(a)]) for a in ev]
        elif status == 2:
            raise NumericalError(f"non-finite midprice at t={k * s.dt}: {z}")
    pdf = DensityEstimate(g, counts, int(counts.sum() + outside.sum()),
                          int(outside[0]), int(outside[1]))
    events = EventLog(*(a[:n_ev] for a in ev))
    return RunResult(pdf, events, k_end - k0, com[:n_com].copy(), s.dt * config.com_stride,
                     joint if config.record_joint else None)


def merge_results(results: Sequence[RunResult]) -> RunResult:
    """Combine independent runs; histogram merge is exact integer addition."""
    pdf = results[0].pdf_r
    for r in results[1:]:
        pdf = pdf.merge(r.pdf_r)
    joint = None
    if all(r.joint_hist is not None for r in results):
        joint = sum(r.joint_hist for r in results[1:]) + results[0].joint_hist
    events = EventLog.concat([r.events for r in results], range(len(results)))
    return RunResult(pdf, events, sum(r.n_steps for r in results), None, None, joint,
                     sum(r.n_runs for r in results))


def _run_indexed(args):
    config, i = args
    return run(config, i)


def run_many(config: RunConfig, n_runs: int | None = None, workers: int | None = None
             ) -> list[RunResult]:
    """Run replicas ``0 .. n_runs-1``; replica ``i`` uses stream ``make_generator(seed, i)``.

    ``workers`` defaults to the ``DEALERMODEL_THREADS`` environment variable
    (1 if unset).  Results come back in replica order whatever the worker count.
    """
    n_runs = config.schedule.n_runs if n_runs is None else n_runs
    if n_runs < 1:
        raise ModelError("n_runs must be at least 1")
    if workers is None:
        workers = int(os.environ.get("DEALERMODEL_THREADS", "1"))
    jobs = [(config, i) for i in range(n_runs)]
    if workers > 1 and n_runs > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_indexed, jobs))
    return [_run_indexed(j) for j in jobs]


def run_ensemble(config: RunConfig, n_runs: int | None = None, workers: int | None = None) -> RunResult:
    """Run independent replicas and merge them; the result does not depend on ``workers``."""
    return merge_results(run_many(config, n_runs, workers))


def taker_fractions(events, n_traders: int = 2) -> np.ndarray:
    """Fraction of transactions in which each trader was the taker."""
    takers = events.taker if isinstance(events, EventLog) else np.array([e.taker_index for e in events])
    if takers.size < 100:
        raise ModelError(f"need at least 100 events, got {takers.size}")
    return np.bincount(takers, minlength=n_traders) / takers.size
