"""Discrete-event simulator for entanglement-based time-bin QKD driven by a
multiplexed photon-pair microcomb."""

__version__ = "0.1.0"
