"""
Two dealers and the tent function
=================================

Two traders quote around midprices that perform independent random walks.
Whenever the best bid reaches the best ask they trade and both requote at
the same price.  This script simulates the pair, looks at the relative
price ``r = z1 - z_cm`` and the waiting time between trades, and compares
both with the closed forms.
"""
from dealermodel import AnalyticProfile, ModelParams, RunConfig, SimSchedule, run
from dealermodel.analytic import com_diffusion_constant_n2, mean_transaction_interval
from dealermodel.stats import interval_stats, l1_distance, msd_slope

# L = 2, sigma^2 = 1, no interaction; a shorter horizon than the reference run
params = ModelParams(n_traders=2, spread=2.0, sigma2=1.0)
result = run(RunConfig(params, SimSchedule(dt=1e-4, t_init=20.0, t_end=2000.0, seed=1)))

# The relative price lives in (-L/2, L/2) and its density is a tent.
tent = AnalyticProfile.tent(params)
print(f"L1(histogram, tent)         = {l1_distance(result.pdf_r, tent):.4f}")

# Waiting times: the mean is L^2 / (2 sigma^2).
iv = interval_stats(result.events)
print(f"mean interval               = {iv.mean:.3f}  (theory {mean_transaction_interval(2.0, 1.0):.3f}, "
      f"{iv.count} intervals)")

# Trades never move the pair's centre, so z_cm diffuses freely with D = sigma^2 / 4.
slope = msd_slope(result.com_series, 100, result.com_dt)
print(f"centre-of-mass D            = {slope / 2:.4f}  (theory {com_diffusion_constant_n2(1.0):.4f})")

# A coarse text rendering of the histogram next to the tent.
g = result.pdf_r.grid
for k in range(g.node_index(-1.0), g.node_index(1.0), 25):
    r, est = g.centers[k], result.pdf_r.density[k]
    print(f"  r = {r:+.3f}   sim {est:.3f}   tent {float(tent(r)):.3f}  " + "#" * int(40 * est))
