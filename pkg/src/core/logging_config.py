import os
import logging
from logging.config import dictConfig

import sentry_sdk


def setup_logging(role: str = "driver", level: str | None = None) -> None:
    """Configure process logging and optional error monitoring.

    Args:
        role: Process role shown in every line (driver, worker, server)
        level: Log level; defaults to $LOG_LEVEL or INFO
    """
    level = (level or os.getenv("LOG_LEVEL", "INFO")).upper()
    dictConfig(
        {
            "version": 1,
            "disable_existing_loggers": False,
            "formatters": {
                "default": {
                    "format": (
                        "%(asctime)s - %(levelname)s - %(name)s - "
                        f"[{role}:%(process)d] %(message)s"
                    )
                }
            },
            "handlers": {
                "console": {
                    "class": "logging.StreamHandler",
                    "formatter": "default",
                    "level": level,
                    "stream": "ext://sys.stderr",
                }
            },
            "root": {"handlers": ["console"], "level": level},
        }
    )

    dsn = os.getenv("SENTRY_DSN")
    if dsn:
        sentry_sdk.init(dsn=dsn, traces_sample_rate=1.0, server_name=f"hybridpipe-{role}")
        logging.getLogger(__name__).info("Sentry initialized")
