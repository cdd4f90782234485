"""
Solving the master equation for the relative price
==================================================

The density of ``r`` obeys a diffusion equation on ``(-L/2, L/2)`` whose
wall outflow re-enters at ``r = 0``.  Here we follow a profile in time,
look at the probability currents of the steady state and check that the
error against the exact tent halves when the grid is refined.
"""
import numpy as np

from dealermodel import AnalyticProfile, GridSpec, MLField, ModelParams
from dealermodel.mlsolver import (boundary_condition_check, max_explicit_dt, ml_evolve, ml_steady,
                                  richardson_ratio, sup_distance)

params, grid = ModelParams(), GridSpec()
tent = AnalyticProfile.tent(params)

# Start from a bump sitting near the right wall and watch it relax.
field = MLField.from_function(grid, lambda r: np.exp(-((r - 0.7) / 0.1) ** 2), params.spread)
dt = max_explicit_dt(params, grid)
for chunk in (2_000, 20_000, 200_000):
    field = ml_evolve(field, params, dt, chunk)
    print(f"t = {field.time:8.3f}   sup distance to tent (cell averages) {sup_distance(field, tent)[0]:.5f}")

steady, diag = ml_steady(params, grid)
print(f"wall fluxes {diag.boundary_flux_plus:.6f} + {diag.boundary_flux_minus:.6f} "
      f"= trade rate {diag.implied_rate:.6f}")
kink, wall = boundary_condition_check(steady, params.spread)
print(f"slope just right of 0 minus slope left of the wall: {kink:.2e}; slope outside the wall: {wall:.2e}")

errors, ratios = richardson_ratio(params, (0.04, 0.02, 0.01, 0.005))
for h, e in zip((0.04, 0.02, 0.01, 0.005), errors):
    print(f"dr = {h:<6}  error {e:.6f}")
print("successive ratios:", [round(q, 3) for q in ratios])
