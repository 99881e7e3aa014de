"""Configuration settings for MDA Impute."""

import os
from pathlib import Path

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


def _env_flag(name: str, default: str = "false") -> bool:
    return os.environ.get(name, default).lower() in ("true", "1", "yes")


class Config:
    """Process-level defaults.

    Run-specific settings live in the run configuration file; these values only
    fill what that file leaves out.
    """

    # Output directory for run artifacts
    OUTPUT_DIR = Path(os.environ.get("MDA_OUTPUT_DIR", "mda_output"))

    # Chain defaults
    DEFAULT_ITERATIONS = int(os.environ.get("MDA_ITERATIONS", "5000"))
    DEFAULT_BURN_IN = int(os.environ.get("MDA_BURN_IN", "1000"))
    DEFAULT_THIN = int(os.environ.get("MDA_THIN", "1"))
    DEFAULT_WORKERS = int(os.environ.get("MDA_WORKERS", "1"))

    # Numerical tolerances
    CHOLESKY_TOLERANCE = float(os.environ.get("CHOLESKY_TOLERANCE", "1e-12"))
    RANK_TOLERANCE = float(os.environ.get("RANK_TOLERANCE", "1e-10"))
    SYMMETRY_TOLERANCE = float(os.environ.get("SYMMETRY_TOLERANCE", "1e-12"))
    RIDGE_SCALE = float(os.environ.get("RIDGE_SCALE", "1e-8"))
    TAIL_MASS_THRESHOLD = float(os.environ.get("TAIL_MASS_THRESHOLD", "1e-10"))

    # Prior defaults
    DEFAULT_PRIOR_PRECISION = float(os.environ.get("DEFAULT_PRIOR_PRECISION", "0.01"))
    DEFAULT_CUTOFF_VARIANCE = float(os.environ.get("DEFAULT_CUTOFF_VARIANCE", "100"))

    # Diagnostics
    MAX_AUTOCORRELATION_LAG = int(os.environ.get("MAX_AUTOCORRELATION_LAG", "50"))
    MIN_SUMMARY_DRAWS = int(os.environ.get("MIN_SUMMARY_DRAWS", "100"))

    # Logging settings
    LOG_LEVEL = os.environ.get("LOG_LEVEL", "INFO")
    LOG_FORMAT = os.environ.get("LOG_FORMAT", None)  # Use default if not specified
    LOG_FILE = os.environ.get("LOG_FILE", None)  # No file logging by default
    LOG_JSON = _env_flag("LOG_JSON")
