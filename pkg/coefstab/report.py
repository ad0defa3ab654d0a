from typing import Iterable, Optional
import json
import logging
import math
import os
import tempfile

import numpy as np
import pandas as pd

from .errors import ReportError
from .types import GridField

SUMMARY_COLUMNS = ('id', 'lhs', 'rhs', 'alpha', 'C_final', 'verdict')

TIMING_KEYS = ('wall_time', 'timings')


def _float(x: float):
    if math.isnan(x):
        return 'nan'
    if math.isinf(x):
        return 'inf' if x > 0 else '-inf'
    return float(repr(float(x)))


def to_jsonable(obj, timing: bool = False):
    """ Convert a report object into plain JSON values.

    Complex numbers become `{"re": ..., "im": ...}`, non-finite floats the
    strings `"nan"`, `"inf"` and `"-inf"`. numpy scalars and arrays and
    pandas frames are converted to Python values. Unless `timing` is set,
    the keys `wall_time` and `timings` are dropped.
    """
    if hasattr(obj, 'to_dict') and not isinstance(obj, (pd.DataFrame,
                                                         pd.Series)):
        obj = obj.to_dict()

    if isinstance(obj, dict):
        return {str(k): to_jsonable(v, timing) for k, v in obj.items()
                if timing or k not in TIMING_KEYS}

    if isinstance(obj, pd.DataFrame):
        return to_jsonable(obj.to_dict(orient='records'), timing)

    if isinstance(obj, pd.Series):
        return to_jsonable(obj.tolist(), timing)

    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v, timing) for v in obj]

    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist(), timing)

    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)

    if isinstance(obj, (int, np.integer)):
        return int(obj)

    if isinstance(obj, (complex, np.complexfloating)):
        return dict(re=_float(obj.real), im=_float(obj.imag))

    if isinstance(obj, (float, np.floating)):
        return _float(float(obj))

    if obj is None or isinstance(obj, str):
        return obj

    return str(obj)


def dumps(report, timing: bool = False) -> str:
    """ Deterministic JSON text: sorted keys, shortest round-trip floats. """
    data = to_jsonable(report, timing)
    return json.dumps(data, sort_keys=True, indent=2, allow_nan=False) + '\n'


def _atomic_write(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))

    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix='.tmp-',
                                   suffix=os.path.basename(path))
        try:
            with os.fdopen(fd, 'w', encoding='utf-8', newline='') as f:
                f.write(text)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as e:
        raise ReportError(f'cannot write {path}: {e}', path=path) from e


def ensure_directory(directory: str) -> str:
    try:
        os.makedirs(directory, exist_ok=True)
    except OSError as e:
        raise ReportError(f'cannot create directory {directory}: {e}',
                          path=directory) from e
    return directory


def write_report(report, directory: str, name: str,
                 timing: bool = False) -> str:
    """ Write `report` as `<directory>/<name>.json`, replacing the file
    atomically.

    :returns: The path of the written file.
    :raises ReportError: on any IO failure.
    """
    ensure_directory(directory)
    path = os.path.join(directory, f'{name}.json')
    _atomic_write(path, dumps(report, timing))
    logging.info(f'wrote report {path}')
    return path


def write_table(frame: pd.DataFrame, directory: str, name: str) -> str:
    """ Write a table as `<directory>/<name>.csv`. """
    ensure_directory(directory)
    path = os.path.join(directory, f'{name}.csv')
    text = frame.to_csv(index=False, float_format='%.17g', na_rep='nan')
    _atomic_write(path, text)
    return path


def write_field(f: GridField, directory: str, name: str) -> str:
    """ Dump a node field as `<directory>/<name>.csv` (`x,y,re,im`). """
    return write_table(f.to_frame(), directory, name)


def _cell(value) -> str:
    value = to_jsonable(value)
    if isinstance(value, dict):
        value = value.get('re')
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if value is None:
        return ''
    return str(value)


def summary_row(report) -> dict:
    data = report if isinstance(report, dict) else report.to_dict()
    return {column: data.get(column) for column in SUMMARY_COLUMNS}


def _create_with_header(path: str):
    # link() fails if another writer created the file first
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(os.path.abspath(path)),
                               prefix='.tmp-summary-')
    try:
        with os.fdopen(fd, 'w', encoding='utf-8') as f:
            f.write(','.join(SUMMARY_COLUMNS) + '\n')
        os.chmod(tmp, 0o644)
        try:
            os.link(tmp, path)
        except FileExistsError:
            pass
    finally:
        os.unlink(tmp)


def append_summary(rows: Iterable[dict], directory: str,
                   filename: str = 'summary.csv') -> str:
    """ Append summary rows to `<directory>/summary.csv`. The header is
    written by whichever writer creates the file, and every row is a single
    `O_APPEND` write so that concurrent writers never interleave within a
    row.

    :raises ReportError: on any IO failure.
    """
    ensure_directory(directory)
    path = os.path.join(directory, filename)

    try:
        if not os.path.exists(path):
            _create_with_header(path)

        for row in rows:
            line = ','.join(_cell(row.get(c)) for c in SUMMARY_COLUMNS)
            fd = os.open(path, os.O_WRONLY | os.O_APPEND)
            try:
                os.write(fd, (line + '\n').encode('utf-8'))
            finally:
                os.close(fd)
    except OSError as e:
        raise ReportError(f'cannot append to {path}: {e}', path=path) from e

    return path


def read_summary(path: str) -> Optional[pd.DataFrame]:
    """ Load a summary CSV written by `append_summary`. """
    if not os.path.exists(path):
        return None
    return pd.read_csv(path)
