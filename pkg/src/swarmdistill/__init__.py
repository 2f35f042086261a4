"""Distilling centralized swarm policies into a shared communicating policy."""

__version__ = "0.1.0"
