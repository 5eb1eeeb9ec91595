"""Shared helpers: logging, errors, parsing, caching, I/O and metrics."""
