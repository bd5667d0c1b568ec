from typing import Optional
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    PROJECT_NAME: str = "gzk-lab"
    VERSION: str = "1.0.0"

    # Parallelism cap handed to scipy.fft (env: GZK_THREADS)
    THREADS: Optional[int] = None

    # Output
    OUTPUT_DIR: str = "./runs"
    LOG_LEVEL: str = "INFO"

    # Numerical sentinels
    DEFAULT_SEED: int = 1234
    BLOWUP_THRESHOLD: float = 1e6
    TAIL_SENTINEL: float = 1e-10
    PROBE_SAMPLES: int = 100

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="GZK_",
        env_ignore_empty=True,
        extra="ignore"
    )

    @property
    def fft_workers(self) -> Optional[int]:
        """Worker count for scipy.fft; None lets scipy decide."""
        if self.THREADS is None or self.THREADS < 1:
            return None
        return self.THREADS


settings = Settings()
