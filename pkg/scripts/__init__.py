"""Numerical lab for 1D Lagrangian viscous heat-conducting flow with two-term pressure laws."""

__version__ = "0.1.0"
