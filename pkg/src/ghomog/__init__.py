"""Numerical companion for the homogenization of the G equation with random divergence-free drift.

Modules: ``env`` (random drift fields), ``frontprop`` (reachable-set fronts),
``flux`` (cube fluxes), ``percolation`` (good-site fields and skeleton paths),
``shape`` (first-passage norm, effective shape, Hobby-Rice), ``homog``
(control-formula solutions and rates) and ``harness`` (experiments and CLI).
"""
__version__ = "0.1.0"
