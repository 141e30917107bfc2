"""Forced-oscillation source location in oscillator-network grid models
from motif embedding correlation fields (MECF)."""

__version__ = "0.1.0"
