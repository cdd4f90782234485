"""
More than two traders
=====================

With ``N`` traders the relative price of each one is no longer confined to
``|r| < L/2``: between trades a quote can drift past the others.  For
large ``N`` a mean-field profile with a boundary layer of width
``L / (2 sqrt(N))`` describes the density.  The tail beyond ``L/2`` is
largest at intermediate ``N``.
"""
from dealermodel import AnalyticProfile, GridSpec, ModelParams, RunConfig, SimSchedule, default_dt
from dealermodel.cli import sweep_row
from dealermodel.simulator import run_ensemble

grid = GridSpec()
print(" N   tail |r|>=L/2   L1 to tent   L1 to NLO")
for n in (2, 4, 7, 12, 20):
    p = ModelParams(n_traders=n)
    cfg = RunConfig(p, SimSchedule(dt=default_dt(n), t_init=20.0, t_end=150.0, seed=5), grid,
                    record_events=False)
    row = sweep_row(run_ensemble(cfg, n_runs=2).pdf_r, p)
    print(f"{n:3d}   {row['tail_beyond_half_spread']:.4f}          {row['l1_tent']:.4f}       {row['l1_nlo']:.4f}")

nlo = AnalyticProfile.nlo(ModelParams(n_traders=100))
print("NLO profile for N = 100 at r = 0, L/2, L:", [round(float(nlo(r)), 5) for r in (0.0, 1.0, 2.0)])
