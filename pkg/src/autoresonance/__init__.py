"""Autoresonant capture of a chirp-driven, weakly anharmonic oscillator.

Modules
-------
units      circuit parameters, effective temperature, dimensionless reduction
dynamics   classical RK4 trajectories and lock classification
threshold  Monte Carlo locking probability, threshold fits, kappa, scaling laws
wigner     pseudospectral Wigner-function evolution
cli        config parsing and the ``autoresonance`` command
"""
__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
