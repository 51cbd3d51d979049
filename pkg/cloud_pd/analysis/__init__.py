"""Norms, rate bounds and trace checks."""
