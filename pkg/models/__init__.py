"""Typed records shared across the pipeline."""
