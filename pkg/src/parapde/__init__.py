"""Spectral paradifferential toolkit for fully nonlinear parabolic (S)PDEs.

Builds the band-by-band linearization of a fully nonlinear operator on a
periodic grid, verifies its ellipticity and sectoriality numerically, and
time-steps the deterministic and stochastic evolutions with blow-up and
region-exit tracking.
"""

__version__ = "0.1.0"
