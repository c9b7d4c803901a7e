"""Sparse-kernel batch RL with GP model learning for vehicle motion planning."""

__version__ = "0.1.0"
