import gzip
import json
import logging
import re
from pathlib import Path

import numpy as np

LOG_FORMAT = '%(asctime)s %(levelname)s (%(funcName)s:%(lineno)d) - %(message)s'


class BeeFlowError(Exception):
    pass

class InputFormatError(BeeFlowError):
    """Unreadable or malformed input. The CLI exits with code 2."""
    pass

class DomainError(BeeFlowError):
    """Well-formed input the pipeline cannot handle. The CLI exits with code 1."""
    pass


def setup_logging(level='INFO', log_file=None):
    """
    Configures the root logger the way every beeflow entry point does.

    Args:
        level (str): Logging level name.
        log_file (str, optional): Also append log lines to this file.
    """
    handlers = [logging.StreamHandler()]
    if log_file:
        handlers.append(logging.FileHandler(log_file))
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO),
                        format=LOG_FORMAT, handlers=handlers, force=True)


def open_text(path, mode='rt'):
    """Opens a text file, transparently through gzip when the name ends in .gz."""
    path = Path(path)
    if path.suffix == '.gz':
        return gzip.open(path, mode, encoding='utf-8')
    return path.open(mode.replace('t', ''), encoding='utf-8')


def read_json(path):
    """
    Reads a JSON document.

    Raises:
        InputFormatError: If the file is missing or the JSON is malformed. The message
            carries the line and column of a parse error.
    """
    path = Path(path)
    if not path.exists():
        raise InputFormatError(f"{path}: file not found")
    try:
        with open_text(path) as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise InputFormatError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e


def dumps_json(obj):
    # 固定 key 顺序，保证同样的输入得到逐字节相同的文件
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + '\n'


def write_json(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_json(obj), encoding='utf-8')
    return path


_NUM_RE = re.compile(r'(\d+)')

def natural_key(s):
    """
    Sort key ordering ids like humans do, so that f2 < f10.

    Example:
        sorted(['f10', 'f2', 'f1'], key=natural_key) == ['f1', 'f2', 'f10']
    """
    return tuple((0, int(part), '') if part.isdigit() else (1, 0, part)
                 for part in _NUM_RE.split(str(s)) if part != '')


def ids_key(ids):
    return tuple(natural_key(i) for i in ids)


def window_index(times, window_s):
    """
    Maps time points onto the index of the window they fall in.

    Args:
        times (array-like): Time points in seconds.
        window_s (float): Window width.

    Returns:
        np.ndarray: Window indices, with window k covering [k*window_s, (k+1)*window_s).
    """
    times = np.asarray(times, dtype=float)
    if times.size == 0:
        return np.zeros(0, dtype=int)
    edges = np.arange(0.0, times.max() + window_s, window_s)
    return np.searchsorted(edges, times, side='right') - 1


def overlap_length(a_start, a_end, b_start, b_end):
    return max(0.0, min(a_end, b_end) - max(a_start, b_start))
