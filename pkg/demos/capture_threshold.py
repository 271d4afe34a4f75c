"""
Capture into autoresonance and the chirp-rate threshold law
===========================================================

A weakly nonlinear oscillator driven by a down-chirped tone either locks to
the drive and follows it to large amplitude, or slips through resonance and
stays small.  Which one happens depends on the drive strength, with a sharp
threshold that scales as the chirp rate to the power 3/4.

Run with ``python demos/capture_threshold.py``; it takes about a minute.
"""
import numpy as np

from autoresonance import dynamics, threshold
from autoresonance.dynamics import ChirpProfile, OscState
from autoresonance.units import DimensionlessParams

# Parameters of the 6 GHz device at its base temperature, in dimensionless form.
dp = DimensionlessParams(beta=3.55e-6, epsilon=0.0, gamma=2.0, alpha_tilde=1e-6)
chirp = ChirpProfile.default(dp.alpha_tilde)
print(f"chirp window: tau from {chirp.tau_start:.0f} to {chirp.tau_end:.0f}")

# %%
# The zero-fluctuation threshold, found by bisection on the drive amplitude.
eps_c = threshold.deterministic_threshold(dp, chirp)
print(f"threshold eps_c = {eps_c:.5f}")

# %%
# One trajectory just below and one just above.  Each starts on the steady
# drive-following state, so switching the drive on launches no free oscillation.
for factor in (0.95, 1.05):
    d = dp.with_epsilon(factor * eps_c)
    rest = dynamics.forced_response(d, chirp)
    out = dynamics.integrate(OscState(rest.q, rest.j), d, chirp, sample_every=2000)
    h = out.history
    late = h.tau > 0.5 * chirp.tau_end
    print(f"eps = {factor:.2f} eps_c: {out.classification.value:8s} "
          f"final amplitude {out.final_amplitude:6.2f}, "
          f"adiabatic locked amplitude {float(dynamics.locked_amplitude(d, chirp.tau_end)):6.2f}, "
          f"mean |phase mismatch| late {np.abs(h.phase_mismatch[late]).mean():.2f} rad")

# %%
# Threshold versus chirp rate.  Every run uses the same window measured in
# units of the capture time 1/sqrt(alpha_tilde).
alphas = [0.25e-6, 0.5e-6, 1e-6, 2e-6, 4e-6]
scaling = threshold.alpha_scaling(alphas, dp)
for a, e in zip(scaling.alpha_tilde, scaling.eps_c):
    print(f"alpha_tilde = {a:.2e}   eps_c = {e:.5f}")
print(f"log-log slope {scaling.exponent:.3f} (3/4 expected)")
