"""Quadrature, shooting, power-law fitting and PMP diagnosis."""
