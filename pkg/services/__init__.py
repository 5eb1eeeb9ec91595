"""Reference bank and comparison engines."""
