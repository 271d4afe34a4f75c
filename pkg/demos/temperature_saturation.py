"""
From circuit parameters to the quantum floor of the threshold width
===================================================================

The width of the locking window grows like the square root of the
fluctuation energy k_B T_eff, where

    k_B T_eff = (hbar w / 2) coth(hbar w / 2 k_B T)

never drops below the zero-point value hbar w / 2.  Scaling the measured
width squared by 8 kappa^2 pi L alpha k_B therefore gives back T_eff and
saturates at hbar w / 2 k_B at low temperature (143.7 mK at 6 GHz).

The experimental chirp (50.6 MHz/us) means millions of oscillations per
trajectory, so the Monte Carlo below uses a faster chirp on the same circuit.
The scaled width does not depend on the chirp rate.  About a minute.
"""
from dataclasses import replace

from autoresonance import threshold as th
from autoresonance import units

p = units.preset("6GHz")
dp = units.reduce(p, 27e-9)
print(f"6 GHz device at {p.temperature * 1e3:.0f} mK: beta = {dp.beta:.3e}, "
      f"alpha_tilde = {dp.alpha_tilde:.3e}, 27 nV drive -> eps = {dp.epsilon:.4f}")
print(f"volts per unit eps: {units.voltage_scale(p):.3e}")

# %%
for T in (0.0, 0.015, 0.1, 0.2, 0.5, 1.0):
    print(f"T = {T * 1e3:6.1f} mK  ->  T_eff = {units.effective_temperature(T, p.omega) * 1e3:7.2f} mK")

# %%
fast = replace(p, chirp_rate=1e-4 * p.omega ** 2)
sweep = th.temperature_sweep([0.015, 0.1, 0.3, 1.0], fast, n_per_point=1000, seed=1)
print(sweep.metadata["scaled_width_sq"])
for row in sweep.rows:
    print(f"T = {row.T * 1e3:6.1f} mK  T_eff = {row.T_eff * 1e3:7.2f} mK  "
          f"scaled width^2 = {row.scaled_width_sq * 1e3:7.2f} mK")
