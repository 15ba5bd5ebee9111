import os
from pathlib import Path
from dotenv import load_dotenv

from errors import ConfigError

load_dotenv()

LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Config:
    OUTPUT_DIR = os.getenv("ALOQ_OUTPUT_DIR", "outputs")
    JOBS = int(os.getenv("ALOQ_JOBS", "1"))
    LOG_LEVEL = os.getenv("ALOQ_LOG_LEVEL", "INFO").upper()

    DIRECT_BUDGET = int(os.getenv("ALOQ_DIRECT_BUDGET", "500"))
    DIRECT_TOL = float(os.getenv("ALOQ_DIRECT_TOL", "1e-4"))

    HYPER_SAMPLES = int(os.getenv("ALOQ_HYPER_SAMPLES", "10"))
    HYPER_BURN_IN = int(os.getenv("ALOQ_HYPER_BURN_IN", "50"))
    HYPER_THINNING = int(os.getenv("ALOQ_HYPER_THINNING", "5"))
    MC_SIZE = int(os.getenv("ALOQ_MC_SIZE", "200"))

    API_HOST = os.getenv("ALOQ_API_HOST", "127.0.0.1")
    API_PORT = int(os.getenv("ALOQ_API_PORT", "8000"))

    @classmethod
    def validate(cls):
        if cls.JOBS < 1:
            raise ConfigError("ALOQ_JOBS must be at least 1")
        if cls.LOG_LEVEL not in LOG_LEVELS:
            raise ConfigError(
                f"ALOQ_LOG_LEVEL must be one of {', '.join(LOG_LEVELS)}, got {cls.LOG_LEVEL}")
        if cls.DIRECT_BUDGET < 1:
            raise ConfigError("ALOQ_DIRECT_BUDGET must be at least 1")
        if cls.DIRECT_TOL <= 0:
            raise ConfigError("ALOQ_DIRECT_TOL must be positive")
        if cls.HYPER_SAMPLES < 1 or cls.HYPER_BURN_IN < 0 or cls.HYPER_THINNING < 0:
            raise ConfigError("hyperparameter chain sizes must be non-negative (samples >= 1)")
        if cls.MC_SIZE < 100:
            raise ConfigError("ALOQ_MC_SIZE must be at least 100")
        return True

    @classmethod
    def ensure_output_dir(cls, output_dir=None) -> Path:
        path = Path(output_dir or cls.OUTPUT_DIR)
        try:
            path.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise ConfigError(f"Output directory {path} is not writable: {e}")
        if not os.access(path, os.W_OK):
            raise ConfigError(f"Output directory {path} is not writable")
        return path
