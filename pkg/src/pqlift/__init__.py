"""Desk-scale simulation of lifting classical non-adaptive reductions to
stateful quantum solvers: persistence, flood-and-plant and shuffle simulators,
lifted reductions and exact checks of the supporting information bounds."""

__version__ = "0.1.0"
