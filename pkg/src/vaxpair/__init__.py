"""Causal vaccine effects under contagion in two-person partnerships."""

__version__ = "0.1.0"
