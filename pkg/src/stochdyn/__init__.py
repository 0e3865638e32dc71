"""Stochastic dynamical heights and equidistribution diagnostics on P1(Q)."""

__version__ = "0.1.0"
