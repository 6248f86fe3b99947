"""Noisy simulation of collective neutrino oscillations on a linear qubit chain."""

__version__ = "0.1.0"
