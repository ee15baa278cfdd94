"""Decomposition-based large neighborhood search for integer linear programs."""
