import logging
import os
from pathlib import Path

from dotenv import load_dotenv
from pydantic import BaseModel, Field

ROOT_DIR = Path(__file__).parent
load_dotenv(ROOT_DIR / '.env')

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


class Settings(BaseModel):
    log_level: str = "INFO"
    precision: str = Field(default="float32", pattern="^float(32|64)$")
    log_every: int = Field(default=50, ge=1)


def get_settings() -> Settings:
    return Settings(
        log_level=os.environ.get('HPGN_LOG_LEVEL', 'INFO').upper(),
        precision=os.environ.get('HPGN_PRECISION', 'float32'),
        log_every=int(os.environ.get('HPGN_LOG_EVERY', 50)),
    )


def configure_logging(level: str | None = None) -> None:
    logging.basicConfig(
        level=level or get_settings().log_level,
        format=LOG_FORMAT,
    )
