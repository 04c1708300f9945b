"""Hybrid DV/CV teleportation simulator with an exact coherent-state engine and a Fock-space cross-check."""

__version__ = "0.1.0"
