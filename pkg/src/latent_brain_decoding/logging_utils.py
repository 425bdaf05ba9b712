import sys
from pathlib import Path

from loguru import logger

from latent_brain_decoding.config import LOGS_DIR


def setup_logging(level: str = "WARNING") -> None:
    """
    Configure the Loguru logger for a command-line run.

    Two sinks are installed: a rotating DEBUG file named after the entry
    point script (running `lbd fit ...` writes `logs/lbd.log`), and a
    stderr sink at `level` so that normal CLI output stays quiet and
    parsable.

    Parameters
    ----------
    level : str, optional
        Minimum level of messages echoed to stderr. Default is "WARNING".

    Returns
    -------
    None
    """

    LOGS_DIR.mkdir(parents=True, exist_ok=True)

    script_called = Path(sys.argv[0]).stem or "latent_brain_decoding"
    log_file = LOGS_DIR / f"{script_called}.log"

    logger.remove()
    logger.add(sys.stderr, level=level)
    logger.add(log_file, rotation="10 MB", level="DEBUG", encoding="utf-8")
