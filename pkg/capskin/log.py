import logging
import os
import sys
import time

ROOT_LOGGER = "capskin"
LOG_FILE_NAME = "capskin.log"


def _parse_level(loglevel):
    # User can provide log level as a number or string (eg DEBUG)
    if isinstance(loglevel, int):
        return loglevel
    return int(loglevel) if loglevel.isdigit() else loglevel.upper()


def make_formatter():
    # UTC with microprecision so log files from parallel runs can be concatenated and sorted
    formatter = logging.Formatter(
        fmt="%(asctime)s.%(msecs)03d000Z %(name)s (%(levelname)s): %(message)s",
        datefmt="%Y-%m-%dT%H:%M:%S",
    )
    formatter.converter = time.gmtime
    return formatter


def start_logging(loglevel="INFO", log_dir=None):
    """Attach console (and optionally file) handlers to the capskin logger tree.

    The console shows events at `loglevel` and above on stderr, keeping stdout
    for command results. When `log_dir` is given, every event down to DEBUG is
    also written to `<log_dir>/capskin.log`.
    """
    log = logging.getLogger(ROOT_LOGGER)
    log.setLevel(logging.DEBUG)
    stop_logging()

    formatter = make_formatter()

    ch = logging.StreamHandler(sys.stderr)
    ch.setLevel(_parse_level(loglevel))
    ch.setFormatter(formatter)
    log.addHandler(ch)

    if log_dir is not None:
        os.makedirs(log_dir, exist_ok=True)
        fh = logging.FileHandler(
            os.path.join(log_dir, LOG_FILE_NAME), encoding="utf-8"
        )
        fh.setLevel(logging.DEBUG)
        fh.setFormatter(formatter)
        log.addHandler(fh)

    return log


def stop_logging():
    log = logging.getLogger(ROOT_LOGGER)
    for handler in log.handlers[:]:
        log.removeHandler(handler)
        handler.close()
