"""Weighted interacting particle systems on the torus, their mean-field limit
and relative-entropy diagnostics for propagation of chaos."""

__version__ = "0.1.0"
