"""relqdist: empirical distances between Poincare-invariant quantum systems.

Classical world-line geometry, spin-weighted harmonic analysis on the mass
shell, the word-moment engine for the basic observables, and the two-particle
empirical distance whose large-spin limit reproduces the classical Lorentzian
distance between centre-of-mass lines.
"""

__version__ = "0.1.0"
