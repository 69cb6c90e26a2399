"""Hamiltonian Monte Carlo sampling and chain diagnostics."""
