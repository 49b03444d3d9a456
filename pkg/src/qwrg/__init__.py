"""Quantum and classical walks on self-similar networks: simulation, Laplace-space RG and pole analysis."""

__version__ = "0.1.0"
