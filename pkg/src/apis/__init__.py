"""Honeybee-mite-virus population dynamics: simulation, equilibria and analytic checks."""

__version__ = "0.1.0"
