"""
Logging configuration for the RIS-ZF simulator
"""
import logging
import sys
from pathlib import Path
from typing import Optional, Union

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# Create logs directory if it doesn't exist
log_dir = Path("logs")
log_dir.mkdir(exist_ok=True)
DEFAULT_LOG_FILE = log_dir / "ris_zf.log"

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format=LOG_FORMAT,
    handlers=[
        logging.StreamHandler(sys.stdout),
        logging.FileHandler(DEFAULT_LOG_FILE)
    ]
)

# Create logger instance
logger = logging.getLogger("RIS-ZF")
logger.setLevel(logging.INFO)


def configure_logging(level: Union[str, int] = "INFO",
                      log_file: Optional[str] = None,
                      console_to_stderr: bool = False) -> logging.Logger:
    """Change the level of the shared logger and optionally redirect its handlers"""
    if isinstance(level, str):
        level = getattr(logging, level.upper(), logging.INFO)
    logger.setLevel(level)

    if console_to_stderr:
        # stdout carries CSV output
        for handler in logging.getLogger().handlers:
            if type(handler) is logging.StreamHandler:
                handler.setStream(sys.stderr)

    if log_file is not None:
        root = logging.getLogger()
        for handler in list(root.handlers):
            if type(handler) is logging.FileHandler:
                root.removeHandler(handler)
                handler.close()
        Path(log_file).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(file_handler)

    return logger
