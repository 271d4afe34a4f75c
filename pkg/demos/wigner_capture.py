"""
Phase-space picture of capture
==============================

Evolves the vacuum Wigner function of the oscillator through the chirp with
the split-step Fourier solver, once with the quantum correction and once in
the classical limit, and compares locked fraction and negativity.

The full-length runs (``autoresonance wigner --preset n10`` and friends)
take about twenty minutes each at 256 x 256; this script uses a coarse grid
and stops early, so it finishes in a few minutes.
"""
import numpy as np

from autoresonance import wigner

TAU_END = 1500.0

for name in ("n10", "classical"):
    final, diags, dp, chirp = wigner.run_preset(name, n=128, dtau=0.02, tau_end=TAU_END,
                                                every=25000)
    mn, neg = wigner.negativity(final)
    lf = wigner.locked_fraction(final, dp, chirp)
    print(f"{name:9s} gamma = {dp.gamma:g}: locked fraction {lf:.3f}, "
          f"min f {mn:.2e}, negative mass {neg:.3e}, "
          f"norm drift {np.max(np.abs(diags['norm'] - 1)):.1e}")
    wigner.write_csv(final, f"wigner_{name}_tau{TAU_END:.0f}.csv")
