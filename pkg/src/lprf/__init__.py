"""Construction and verification of forward self-similar Navier-Stokes solutions."""

__version__ = "0.1.0"
