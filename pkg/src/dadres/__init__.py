"""Tri-level defender-attacker-defender optimization of hospital network resilience."""

__version__ = "0.1.0"
