"""Default thresholds, rank bands and engine policy."""

# Confidence-filtered aggregation
DEFAULT_P = 50
DEFAULT_T = 50
DEFAULT_M = 30
DEFAULT_DELTA = 0.10

# Reference selection
DEFAULT_TAU_DUP = 0.99
DEFAULT_BAND_HARD_NEGATIVE = (20, 200)
DEFAULT_BAND_BOUNDARY_PROBE = (200, 1000)

# Engine calls
RETRY_ATTEMPTS = 3
RETRY_BACKOFF_SECONDS = 1.0
DEFAULT_PARALLEL = 4
DEFAULT_TIMEOUT_SECONDS = 60.0
DEFAULT_SEED = 0
DEFAULT_TOKEN_ENV = "DOUBLETAKE_API_TOKEN"

# Mock engine
DEFAULT_MOCK_RELIABILITY = 0.8
DEFAULT_MOCK_CONFIDENCE = (50, 95)

