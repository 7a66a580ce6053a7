"""Dirac points of honeycomb lattices of circular obstacles."""
