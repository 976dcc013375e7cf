"""Semilinear radiative transport with polynomial absorption.

Forward kinetic and diffusion solvers, the small-parameter limit harness,
reconstruction of absorption coefficients from internal density data, and
a split-step paraxial-wave validation path.
"""

__version__ = "0.1.0"
