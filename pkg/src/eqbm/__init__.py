"""Evolved quantum Boltzmann machines trained by variational minimax."""

__version__ = "0.1.0"
