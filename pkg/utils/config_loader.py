"""Environment variable helpers shared across the project."""
from __future__ import annotations

import os

from dotenv import load_dotenv

from config.constants import DEFAULT_TOKEN_ENV
from config.settings import get_settings

load_dotenv()


def get_api_token(env_var: str = DEFAULT_TOKEN_ENV) -> str | None:
    """Return the bearer token for the HTTP comparison engine."""
    if env_var == DEFAULT_TOKEN_ENV:
        return get_settings().DOUBLETAKE_API_TOKEN
    return os.getenv(env_var)
