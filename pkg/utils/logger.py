import os
import logging
import warnings
import colorlog
from dotenv import load_dotenv
from from_root import from_root
from logging.handlers import RotatingFileHandler
from datetime import datetime

load_dotenv()


def get_current_timestamp() -> str:
    return datetime.now().strftime("%Y-%m-%d-%H-%M-%S")


LOGS_DIR: str = os.environ.get("CPVAE_LOG_DIR", "logs")
LOG_FILE_FORMAT: str = f"cpvae-{get_current_timestamp()}.log"
LOG_LEVEL: str = os.environ.get("CPVAE_LOG_LEVEL", "INFO").upper()

maxBytes: int = 5 * 1024 * 1024  # 5 MB
backupCount: int = 4

logs_dirpath: str = (
    LOGS_DIR if os.path.isabs(LOGS_DIR) else os.path.join(from_root(), LOGS_DIR)
)
os.makedirs(logs_dirpath, exist_ok=True)
log_filepath: str = os.path.join(logs_dirpath, LOG_FILE_FORMAT)


def config_logger(level: str = LOG_LEVEL) -> None:
    """
    Configures the root logger with a colored console handler and a rotating file handler.

    The console shows `level` and above (INFO unless CPVAE_LOG_LEVEL says otherwise);
    the file keeps DEBUG so that per-step training traces survive a crashed run.
    Handlers are attached only once, so repeated imports do not duplicate output.

    Args:
        level (str): Console log level name, e.g. "INFO" or "DEBUG".
    """
    logger: logging.Logger = logging.getLogger()
    logger.setLevel(logging.DEBUG)

    # Suppress FutureWarnings from pandas/sklearn deprecations
    warnings.simplefilter(action="ignore", category=FutureWarning)

    file_format: logging.Formatter = logging.Formatter(
        "[ %(asctime)s ] %(name)s - %(levelname)s - %(message)s"
    )
    console_format: colorlog.ColoredFormatter = colorlog.ColoredFormatter(
        "[ %(asctime)s ] %(name)s - %(log_color)s%(levelname)s%(reset)s - %(message)s",
        datefmt=None,
        reset=True,
        log_colors={
            "DEBUG": "cyan",
            "INFO": "green",
            "WARNING": "yellow",
            "ERROR": "red",
            "CRITICAL": "bold_red",
        },
    )

    if not logger.handlers:
        console_handler: logging.StreamHandler = logging.StreamHandler()
        console_handler.setLevel(getattr(logging, level, logging.INFO))
        console_handler.setFormatter(console_format)
        logger.addHandler(console_handler)

        file_handler: RotatingFileHandler = RotatingFileHandler(
            log_filepath, maxBytes=maxBytes, backupCount=backupCount, encoding="utf-8"
        )
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(file_format)
        logger.addHandler(file_handler)


config_logger()


def set_console_level(level: str) -> None:
    """Changes the console threshold after import; the file handler stays at DEBUG."""
    for handler in logging.getLogger().handlers:
        if not isinstance(handler, RotatingFileHandler):
            handler.setLevel(getattr(logging, level.upper(), logging.INFO))
