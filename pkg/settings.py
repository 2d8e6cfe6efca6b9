import logging
import os

from dotenv import load_dotenv

load_dotenv()

OUTPUT_ROOT = os.getenv("RSPDE_OUTPUT_ROOT", "runs")
WORKERS = int(os.getenv("RSPDE_WORKERS", "1"))
LOG_LEVEL = os.getenv("RSPDE_LOG_LEVEL", "INFO").upper()
ALLOW_ORIGINS = [o.strip() for o in os.getenv("RSPDE_ALLOW_ORIGINS", "*").split(",")
                 if o.strip()]


def configure_logging(level: str | None = None) -> None:
    logging.basicConfig(
        level=getattr(logging, level or LOG_LEVEL, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
