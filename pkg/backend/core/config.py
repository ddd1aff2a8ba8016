import logging
import os
from typing import Literal

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, ValidationError, field_validator

from core.errors import UsageError

load_dotenv()

DEFAULT_SEED = int(os.getenv("STG_SEED", "0"))
DEFAULT_THREADS = os.getenv("STG_THREADS", "auto").strip().lower()
DEFAULT_PRECISION = int(os.getenv("STG_PRECISION", "12"))
DEFAULT_OUTPUT = os.getenv("STG_OUTPUT", "text").strip().lower()
DEFAULT_CONFIDENCE = float(os.getenv("STG_CONFIDENCE", "0.99"))
MAX_STEPS = max(1, int(os.getenv("STG_MAX_STEPS", "10000")))
CHUNK_SIZE = max(1, int(os.getenv("STG_CHUNK_SIZE", "4096")))
LOG_LEVEL = os.getenv("STG_LOG_LEVEL", "WARNING").strip().upper()
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class Config(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = DEFAULT_SEED
    threads: int | Literal["auto"] = "auto"
    precision: int = DEFAULT_PRECISION
    output: Literal["text", "json"] = "text"
    log_level: str = LOG_LEVEL

    @field_validator("seed")
    @classmethod
    def _seed_non_negative(cls, value: int) -> int:
        if value < 0:
            raise ValueError("seed must be non-negative")
        return value

    @field_validator("threads", mode="before")
    @classmethod
    def _threads(cls, value):
        if isinstance(value, str):
            value = value.strip().lower()
            if value == "auto":
                return value
            value = int(value)
        if value < 1:
            raise ValueError("threads must be 'auto' or at least 1")
        return value

    @field_validator("precision")
    @classmethod
    def _precision(cls, value: int) -> int:
        if value < 6:
            raise ValueError("precision must be at least 6 digits")
        return value

    @field_validator("log_level")
    @classmethod
    def _log_level(cls, value: str) -> str:
        value = value.upper()
        levels = logging.getLevelNamesMapping() if hasattr(logging, "getLevelNamesMapping") else dict(logging._nameToLevel)
        if value not in levels:
            raise ValueError(f"unknown log level {value}")
        return value

    def worker_count(self) -> int:
        if self.threads == "auto":
            return max(1, min(8, os.cpu_count() or 1))
        return self.threads


def load_config(**overrides) -> Config:
    values = {
        "seed": DEFAULT_SEED,
        "threads": DEFAULT_THREADS,
        "precision": DEFAULT_PRECISION,
        "output": DEFAULT_OUTPUT,
        "log_level": LOG_LEVEL,
    }
    values.update({key: value for key, value in overrides.items() if value is not None})
    try:
        return Config(**values)
    except ValidationError as exc:
        raise UsageError(f"invalid configuration: {exc.errors()[0]['msg']}") from exc


def configure_logging(level: str) -> None:
    logging.basicConfig(level=level, format=LOG_FORMAT)
