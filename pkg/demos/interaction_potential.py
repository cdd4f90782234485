"""
Traders attracted to the market midprice
========================================

Adding the drift ``-u^2 (z_i - z_M)`` pulls each midprice towards the
market midprice, which keeps quotes apart and makes trades rarer.  The
steady density of ``r`` is then known in closed form; its normalisation
involves ``erf``, ``erfi`` and a 2F2 hypergeometric function.
"""
import math

from dealermodel import AnalyticProfile, GridSpec, ModelParams, RunConfig, SimSchedule, run
from dealermodel.analytic import harmonic_normalization
from dealermodel.mlsolver import ml_steady
from dealermodel.stats import DensityEstimate, l1_distance

for u2 in (0.25, 1.0, 4.0):
    p = ModelParams(u2=u2)
    sc = math.sqrt(p.sigma_cm2)
    z_closed = harmonic_normalization(p.spread, sc, p.u, "closed")
    z_quad = harmonic_normalization(p.spread, sc, p.u, "quadrature")
    print(f"u^2 = {u2:4}:  Z closed {z_closed:.12f}   Z quadrature {z_quad:.12f}")

# The finite-difference solver, the closed form and a simulation side by side.
p, g = ModelParams(u2=1.0), GridSpec()
profile = AnalyticProfile.harmonic(p)
field, diag = ml_steady(p, g)
solver = DensityEstimate.from_density(g, field.bin_values())
sim = run(RunConfig(p, SimSchedule(t_end=2000.0, seed=3), record_events=False))
print(f"L1(solver, closed form)     = {l1_distance(solver, profile):.2e}")
print(f"L1(simulation, closed form) = {l1_distance(sim.pdf_r, profile):.4f}")
print(f"trade rate with u^2 = 1     = {diag.implied_rate:.4f}  (0.5 without the potential)")
