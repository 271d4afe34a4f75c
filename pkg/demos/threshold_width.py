"""
Fluctuations broaden the threshold
==================================

With thermal or zero-point fluctuations in the initial state, locking becomes
probabilistic.  The probability rises from 0 to 1 over a window whose width
is set by how far a small initial oscillation shifts the threshold:

    threshold(A0, dphi) = eps_c - kappa' A0 cos(dphi)

and by the spread of A0.  This script measures both and compares them.
Runs in a few minutes.
"""
import math

import numpy as np

from autoresonance import threshold as th
from autoresonance.dynamics import ChirpProfile
from autoresonance.units import DimensionlessParams

dp = DimensionlessParams(beta=3.55e-6, epsilon=0.0, gamma=2.0, alpha_tilde=1e-4)
chirp = ChirpProfile.default(dp.alpha_tilde)

# %%
# Threshold shift from a small free oscillation at the start of the chirp.
dphi = 2 * np.pi * np.arange(8) / 8
k = th.kappa_estimate(dp, chirp, [0.0, 0.5, 1.0], dphi)
print(f"eps_c = {k.eps_c:.5f}, kappa' = {k.kappa_raw:.3e}, "
      f"kappa = kappa'/(2 sqrt(alpha)) = {k.kappa:.4f}")

# %%
# Monte Carlo locking probability for a unit-variance Gaussian start, with
# Wilson intervals, and the erf fit.
dist = th.InitialDistribution(variance_scale=1.0, seed=2024)
s = 2 * k.kappa * math.sqrt(dp.alpha_tilde) * dist.sigma
grid = th.threshold_grid(k.eps_c, s, n_points=10, span=2.5)
curve = th.threshold_scan(grid, dp, chirp, dist, 1000)
fit = th.fit_threshold(curve)
for eps, n_locked, n, p, lo, hi in curve.rows():
    print(f"eps {eps:.5f}  {n_locked:5d}/{n}  p = {p:.3f}  [{lo:.3f}, {hi:.3f}]")
print(f"fit: eps_c = {fit.eps_c:.5f} +- {fit.eps_c_se:.1e}, "
      f"width = {fit.width:.3e} +- {fit.width_se:.1e}, chi2/dof = {fit.chi2:.1f}/{fit.dof}")

# %%
# The width predicted from the measured shift, 2 kappa sqrt(2 pi alpha) sigma,
# against the fitted one.
predicted = th.predicted_width_eps(dp, dist.variance_scale, kappa=k.kappa)
print(f"predicted width {predicted:.3e}, fitted {fit.width:.3e}, "
      f"ratio {fit.width / predicted:.3f}")
