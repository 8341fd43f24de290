"""
Configuration management using environment variables.
"""
from functools import lru_cache
from pydantic_settings import BaseSettings
from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Settings(BaseSettings):
    """Engine defaults loaded from ZT_* environment variables."""

    # Logging
    log_level: str = "INFO"

    # Reproducibility
    default_seed: int = 0

    # Decision thresholds
    theta_block: float = 0.5
    theta_auto: float = 0.9

    # Learning
    alpha: float = 1.0
    max_parents: int = 3
    max_iterations: int = 1000
    random_restarts: int = 0
    restart_length: int = 5
    reserve_other: bool = True

    # Dataset ingestion
    timestamp_policy: str = "drop"
    timestamp_timezone: str = "UTC"

    # Inference
    enumeration_limit: int = 1_000_000

    # Simulated message sizes (bytes)
    request_bytes: int = 512
    verdict_bytes: int = 128

    class Config:
        env_prefix = "ZT_"
        env_file = ".env"
        case_sensitive = False


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()
