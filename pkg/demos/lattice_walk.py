"""
A lattice version of the relative price
=======================================

On a lattice of spacing ``l`` the relative price hops one site left or
right at rate ``lambda / 2`` each.  A hop onto the barrier ``|r| = L/2`` is
a trade and sends the walker back to the origin.  The master equation is a
small linear system whose steady state is a discrete tent.
"""
import numpy as np

from dealermodel.lattice import (LatticeDistribution, LatticeParams, diffusive_limit_check,
                                 embedded_mixing_stride, lattice_monte_carlo, lattice_steady_state,
                                 lattice_transient)

p = LatticeParams.diffusive(sigma_cm2=0.5, L=2.0, n_bar=4)
steady = lattice_steady_state(p)
print("sites       ", p.sites)
print("steady P_k  ", np.round(steady.probs, 6))
print("times n^2   ", np.round(steady.probs * p.n_bar**2, 6))

# Relaxation from a walker started next to the barrier.
start = LatticeDistribution.delta(p, 3)
for t in (0.1, 0.5, 2.0, 10.0):
    out = lattice_transient(start, p, t, 0.01)
    print(f"t = {t:5}:  L1 to steady state {np.abs(out.probs - steady.probs).sum():.2e}")

# Monte Carlo of the walker.  Every jump flips the parity of the site, so
# samples are taken at an odd stride that also spans the mixing time.
stride = embedded_mixing_stride(p)
mc = lattice_monte_carlo(p, 1_000_000, seed=11, stride=stride)
print(f"Monte Carlo ({mc.n_samples} samples, stride {stride}):", np.round(mc.frequencies, 4))

# Refining the lattice along lambda l^2 = sigma_cm^2 recovers the continuum tent.
table = diffusive_limit_check(0.5, 2.0, (4, 8, 16, 32, 64))
for row in table.rows:
    print(f"n_bar = {row.n_bar:3d}  l = {row.l:.5f}  sup error {row.sup_error:.5f}  "
          f"error * n_bar {row.scaled_error:.4f}")
