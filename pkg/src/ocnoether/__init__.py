"""Noether and weak conservation-law workbench for optimal control problems."""

__version__ = "0.1.0"
