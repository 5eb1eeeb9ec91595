"""Pair inference and threshold sweeps."""
