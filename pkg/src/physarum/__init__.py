"""Physarum network dynamics: simulation, electrical solves and convergence checks."""
