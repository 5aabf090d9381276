"""Doubly truncated Normal distributions, CLT experiments and constrained LME fitting."""

__version__ = "0.1.0"
