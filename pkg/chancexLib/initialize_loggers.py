import logging
import os
import sys
from logging.handlers import RotatingFileHandler

LOG_FORMAT = "[%(asctime)s] %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H-%M-%S"
MAX_LOG_SIZE = 1024 * 1024  # 1MB
BACKUP_COUNT = 3


def _attach_file_handler(name: str, level: int, path: str) -> logging.Logger:
    logger = logging.getLogger(name)
    logger.setLevel(level)
    logger.propagate = False

    current = [h for h in logger.handlers if isinstance(h, RotatingFileHandler)]
    if len(current) == 1 and current[0].baseFilename == path:
        return logger

    for handler in list(logger.handlers):
        handler.close()
        logger.removeHandler(handler)

    handler = RotatingFileHandler(path, maxBytes=MAX_LOG_SIZE, backupCount=BACKUP_COUNT, encoding="utf-8")
    handler.setFormatter(logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT))
    logger.addHandler(handler)
    return logger


def resolve_log_dir(log_dir: str | None = None) -> str:
    """
    :param log_dir: explicit directory, overriding $CHANCEX_LOG_DIR and './logs'
    :return: absolute path of the directory the loggers write to
    """
    return os.path.abspath(log_dir or os.environ.get("CHANCEX_LOG_DIR", "logs"))


def setup_loggers(log_dir: str | None = None) -> tuple[logging.Logger, logging.Logger]:
    """
    Returns the (error_logger, info_logger) pair shared by the solver, the
    simulator and the command-line tool.

    - Files go to log_dir, else $CHANCEX_LOG_DIR, else './logs'.
    - error_logger: ERROR and above to 'errors.log'.
    - info_logger: INFO and above to 'info.log'; solver anomalies
      (EM non-convergence, slow chance-constraint recovery) land there as WARNING.
    - Rotating files (1MB, 3 backups), propagation disabled.
    - Calling it again with the same directory keeps the existing handlers,
      so every library module can call it at import time.
    """
    logs_dir = resolve_log_dir(log_dir)

    try:
      os.makedirs(logs_dir, exist_ok=True)

    except (FileExistsError, PermissionError) as e:
      print(f"[ERROR]: cannot create log directory {logs_dir}: {e}")
      sys.exit(3)

    error_logger = _attach_file_handler("error_logger", logging.ERROR, os.path.join(logs_dir, "errors.log"))
    info_logger = _attach_file_handler("info_logger", logging.INFO, os.path.join(logs_dir, "info.log"))

    return error_logger, info_logger
