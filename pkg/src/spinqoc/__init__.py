"""Optimal control of a molecular spin qudit driven by magnetic pulses."""

__version__ = "0.1.0"
