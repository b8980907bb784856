# config/settings.py

import os
from dotenv import load_dotenv

# Load environment variables from .env file for local development
load_dotenv()

class Settings:
    """
    Process-wide configuration for celltune.
    - Reads from environment variables (or a local .env).
    - Run-specific parameters live in RunConfig files, not here.
    """
    # --- Output ---
    # Root directory for traces, checkpoints and metrics.
    OUTPUT_DIR: str = os.getenv("CELLTUNE_OUTPUT_DIR", "./runs")

    # --- Logging ---
    LOG_LEVEL: str = os.getenv("CELLTUNE_LOG_LEVEL", "INFO").upper()

    # --- Sweeps ---
    # Upper bound on concurrently running sweep cells.
    SWEEP_WORKERS: int = int(os.getenv("CELLTUNE_SWEEP_WORKERS", "4"))


# Create a single instance of the settings to be imported by other modules
settings = Settings()

if settings.SWEEP_WORKERS < 1:
    raise ValueError(f"CELLTUNE_SWEEP_WORKERS must be >= 1, got {settings.SWEEP_WORKERS}")
