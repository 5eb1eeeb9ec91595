"""Pipeline steps: triad selection, comparison, voting and pair adjudication."""
