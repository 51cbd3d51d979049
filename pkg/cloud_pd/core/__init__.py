"""Regularized Lagrangian, projections and parameter rules."""
