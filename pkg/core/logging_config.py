"""
Logging setup: colored console logs for humans, key=value metrics logs for machines.
"""

import ast
import logging
import os
from typing import Any, Dict, List, Optional, TextIO

import colorlog
import structlog

from config import settings

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'

# Leading keys of every metrics record; the rest follow in sorted order
METRICS_KEY_ORDER = ["event", "step", "task"]


def setup_logging(level: str = settings.LOG_LEVEL, log_file: Optional[str] = settings.LOG_FILE) -> None:
    """
    Configure the root logger once per process.

    Args:
        level: Logging level name
        log_file: Optional path that also receives plain-text records
    """
    root = logging.getLogger()
    root.setLevel(level.upper())
    for handler in list(root.handlers):
        root.removeHandler(handler)

    console = colorlog.StreamHandler()
    console.setFormatter(colorlog.ColoredFormatter('%(log_color)s' + LOG_FORMAT))
    root.addHandler(console)

    if log_file:
        os.makedirs(os.path.dirname(os.path.abspath(log_file)), exist_ok=True)
        file_handler = logging.FileHandler(log_file, encoding='utf-8')
        file_handler.setFormatter(logging.Formatter(LOG_FORMAT))
        root.addHandler(file_handler)


class MetricsLogger:
    """Append-only structured metrics log, one key=value record per line."""

    def __init__(self, path: str):
        self.path = path
        self._file: TextIO = open(path, 'a', encoding='utf-8')
        self._log = structlog.wrap_logger(
            structlog.PrintLogger(file=self._file),
            processors=[
                structlog.processors.KeyValueRenderer(
                    key_order=METRICS_KEY_ORDER,
                    sort_keys=True,
                    drop_missing=True,
                    repr_native_str=False,
                )
            ],
        )

    def log(self, event: str, **fields: Any) -> None:
        self._log.msg(event, **fields)
        self._file.flush()

    def close(self) -> None:
        if not self._file.closed:
            self._file.close()

    def __enter__(self) -> 'MetricsLogger':
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _parse_value(raw: str) -> Any:
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def _parse_line(line: str) -> Dict[str, Any]:
    record = {}
    for token in line.strip().split(' '):
        key, _, raw = token.partition('=')
        record[key] = _parse_value(raw)
    return record


def parse_metrics_log(path: str) -> List[Dict[str, Any]]:
    """
    Read a metrics log back into a list of records.

    Args:
        path: Path to a log written by MetricsLogger

    Returns:
        One dict per line, values parsed back to Python literals where possible
    """
    with open(path, 'r', encoding='utf-8') as f:
        return [_parse_line(line) for line in f if line.strip()]


def truncate_metrics_log(path: str, step: int) -> int:
    """
    Drop records logged after `step`, in place.

    A resumed run replays every step after its checkpoint, so records past the
    restored step would otherwise appear twice. The file is rewritten through
    the same inode, so loggers already holding it open in append mode keep
    writing to it.

    Returns:
        Number of records removed
    """
    if not os.path.isfile(path):
        return 0
    with open(path, 'r+', encoding='utf-8') as f:
        lines = [line for line in f.read().splitlines(keepends=True) if line.strip()]
        kept = [line for line in lines if _parse_line(line).get('step', 0) <= step]
        if len(kept) != len(lines):
            f.seek(0)
            f.writelines(kept)
            f.truncate()
    return len(lines) - len(kept)
