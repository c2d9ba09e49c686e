#!/usr/bin/env python3
"""
DAKScan Matrix I/O - CSV and DAK1 binary sample matrices, JSON reports

DAK1 layout: the 4 magic bytes b"DAK1", N and d as little-endian uint64, then N*d
little-endian float64 values in row-major order.
"""

import csv
import io
import json
import logging
import sys
from collections import Counter, defaultdict
from dataclasses import asdict, is_dataclass
from pathlib import Path
from typing import Any, Iterator, Optional, TextIO, Union

import numpy as np
import pandas as pd

from dakscan.errors import InputError
from dakscan.modules.kernel_module.dak_kernel import SampleMatrix

logger = logging.getLogger(__name__)

MAGIC = b"DAK1"
HEADER_DTYPE = np.dtype('<u8')
VALUE_DTYPE = np.dtype('<f8')
BINARY_SUFFIXES = ('.bin', '.dak')

PathLike = Union[str, Path]


def is_binary_path(path: PathLike) -> bool:
    return Path(path).suffix.lower() in BINARY_SUFFIXES


def _frame_to_sample(frame: pd.DataFrame, source: str) -> SampleMatrix:
    if frame.empty:
        raise InputError(f"{source}: no data rows")
    if frame.isna().any().any():
        row = int(np.flatnonzero(frame.isna().any(axis=1).to_numpy())[0]) + 1
        raise InputError(f"{source}: row {row} is ragged or has empty cells")
    try:
        values = frame.to_numpy(dtype=np.float64)
    except (TypeError, ValueError) as e:
        raise InputError(f"{source}: non-numeric cell ({e})") from e
    return SampleMatrix(values)


def read_csv_matrix(source: Union[PathLike, TextIO]) -> SampleMatrix:
    """N x d matrix, one row per time point, no header"""
    name = getattr(source, 'name', str(source))
    try:
        frame = pd.read_csv(source, header=None, skipinitialspace=True)
    except pd.errors.EmptyDataError as e:
        raise InputError(f"{name}: input is empty") from e
    except pd.errors.ParserError as e:
        raise InputError(f"{name}: ragged rows ({e})") from e
    try:
        numeric = frame.apply(pd.to_numeric, errors='raise')
    except (TypeError, ValueError) as e:
        raise InputError(f"{name}: non-numeric cell ({e})") from e
    return _frame_to_sample(numeric, name)


def read_binary_matrix(path: PathLike) -> SampleMatrix:
    raw = Path(path).read_bytes()
    header_end = len(MAGIC) + 2 * HEADER_DTYPE.itemsize
    if len(raw) < header_end or raw[:len(MAGIC)] != MAGIC:
        raise InputError(f"{path}: not a DAK1 matrix (bad magic or truncated header)")
    n_obs, n_dims = (int(v) for v in np.frombuffer(raw, dtype=HEADER_DTYPE, count=2, offset=len(MAGIC)))
    expected = n_obs * n_dims * VALUE_DTYPE.itemsize
    if len(raw) - header_end != expected:
        raise InputError(
            f"{path}: header declares {n_obs}x{n_dims} values ({expected} bytes), "
            f"payload has {len(raw) - header_end} bytes")
    values = np.frombuffer(raw, dtype=VALUE_DTYPE, offset=header_end).reshape(n_obs, n_dims)
    return SampleMatrix(values)


def read_matrix(path: Optional[PathLike]) -> SampleMatrix:
    """Binary by suffix, CSV otherwise; None or '-' reads CSV from stdin"""
    if path is None or str(path) == '-':
        return read_csv_matrix(sys.stdin)
    if not Path(path).is_file():
        raise InputError(f"Input file not found: {path}")
    if is_binary_path(path):
        return read_binary_matrix(path)
    return read_csv_matrix(path)


def write_binary_matrix(sample: SampleMatrix, path: PathLike):
    with open(path, 'wb') as f:
        f.write(MAGIC)
        f.write(np.array([sample.n_obs, sample.n_dims], dtype=HEADER_DTYPE).tobytes())
        f.write(np.ascontiguousarray(sample.values, dtype=VALUE_DTYPE).tobytes())


def write_csv_matrix(sample: SampleMatrix, path: PathLike):
    """Full-precision CSV that reads back to identical floats"""
    pd.DataFrame(sample.values).to_csv(path, header=False, index=False, float_format='%.17g')


def write_matrix(sample: SampleMatrix, path: PathLike):
    if is_binary_path(path):
        write_binary_matrix(sample, path)
    else:
        write_csv_matrix(sample, path)


def parse_stream_row(line: str, line_number: int) -> Optional[np.ndarray]:
    """One comma-separated observation; blank lines give None"""
    text = line.strip()
    if not text:
        return None
    cells = next(csv.reader(io.StringIO(text)))
    try:
        row = np.array([float(cell) for cell in cells], dtype=np.float64)
    except ValueError as e:
        raise InputError(f"line {line_number}: non-numeric cell ({e})") from e
    if not np.all(np.isfinite(row)):
        raise InputError(f"line {line_number}: non-finite value")
    return row


def open_stream(path: Optional[PathLike]) -> TextIO:
    """Text handle for monitor input; None or '-' is stdin"""
    if path is None or str(path) == '-':
        return sys.stdin
    if not Path(path).is_file():
        raise InputError(f"Input file not found: {path}")
    try:
        return open(path, 'r')
    except OSError as e:
        raise InputError(f"Cannot read {path}: {e}") from e


def iter_csv_rows(handle: TextIO) -> Iterator[np.ndarray]:
    """Observations from a text stream, read lazily"""
    for line_number, line in enumerate(handle, start=1):
        row = parse_stream_row(line, line_number)
        if row is not None:
            yield row


def make_serializable(obj: Any) -> Any:
    """Plain JSON types from numpy values, dataclasses, paths and containers"""
    if obj is None or isinstance(obj, (str, bool, int)):
        return obj
    if isinstance(obj, float):
        return obj if np.isfinite(obj) else None
    if isinstance(obj, np.generic):
        return make_serializable(obj.item())
    if isinstance(obj, np.ndarray):
        return [make_serializable(item) for item in obj.tolist()]
    if is_dataclass(obj) and not isinstance(obj, type):
        return make_serializable(asdict(obj))
    if isinstance(obj, (Counter, defaultdict)):
        return {str(k): make_serializable(v) for k, v in dict(obj).items()}
    if isinstance(obj, dict):
        return {str(k): make_serializable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, set)):
        return [make_serializable(item) for item in obj]
    if isinstance(obj, Path):
        return str(obj)
    return str(obj)


def dumps_json(data: Any, indent: Optional[int] = 2) -> str:
    return json.dumps(make_serializable(data), indent=indent, ensure_ascii=False)


def write_json(data: Any, path: Optional[PathLike] = None):
    """JSON report to a file, or stdout when path is None or '-'"""
    text = dumps_json(data)
    if path is None or str(path) == '-':
        sys.stdout.write(text + "\n")
        sys.stdout.flush()
        return
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text + "\n")
    logger.debug("JSON report saved: %s", path)


def write_frame(frame: pd.DataFrame, path: Optional[PathLike] = None):
    """CSV table to a file, or stdout"""
    if path is None or str(path) == '-':
        frame.to_csv(sys.stdout, index=False, float_format='%.17g')
        return
    frame.to_csv(path, index=False, float_format='%.17g')
    logger.debug("CSV table saved: %s", path)
