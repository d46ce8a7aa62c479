"""Dataset and structure files.

Text datasets start with a line "n d" followed by n rows of d
space-separated reals. Binary datasets are the magic bytes ``FANN``, n and d
as little-endian uint32, then n * d little-endian float32 values row-major.
Built structures are pickled inside a small envelope that records the
dataset digest they were built from.
"""

# Third-party imports
import numpy as np

# Local imports
from .core import Dataset
from .exceptions import (
    DatasetFormatError, MalformedHeaderError, RowLengthError, ShortFileError,
)

# Standard library imports
from enum import Enum
from pathlib import Path
from typing import Any, Optional, Tuple, Union
import logging
import pickle
import struct

# Logger for this module
logger = logging.getLogger(__name__)

# Constants
MAGIC = b"FANN"
HEADER = struct.Struct("<II")
VALUE_DTYPE = np.dtype("<f4")
STRUCTURE_FORMAT = "fann-structure"
STRUCTURE_VERSION = 1

PathLike = Union[str, Path]


class DatasetFormat(str, Enum):
    TEXT = "text"
    BINARY = "binary"


def detect_format(path: PathLike) -> DatasetFormat:
    with open(path, "rb") as handle:
        return DatasetFormat.BINARY if handle.read(len(MAGIC)) == MAGIC else DatasetFormat.TEXT


def _parse_header(line: str) -> Tuple[int, int]:
    parts = line.split()
    if len(parts) != 2:
        raise MalformedHeaderError(f"Header must be 'n d', got '{line.strip()}'.")
    try:
        n, d = int(parts[0]), int(parts[1])
    except ValueError:
        raise MalformedHeaderError(f"Header values must be integers, got '{line.strip()}'.")
    if n < 0 or d < 1:
        raise MalformedHeaderError(f"Header declares n={n}, d={d}.")
    return n, d


def _load_text(path: PathLike) -> Dataset:
    try:
        return _read_text(path)
    except UnicodeDecodeError as exc:
        raise DatasetFormatError(f"Dataset text holds a non-ASCII byte: {exc.reason}.")


def _read_text(path: PathLike) -> Dataset:
    with open(path, "r", encoding="ascii") as handle:
        header = handle.readline()
        if not header.strip():
            raise MalformedHeaderError("Dataset file has no header line.")
        n, d = _parse_header(header)
        rows = []
        for line in handle:
            if not line.strip():
                continue
            if len(rows) == n:
                raise DatasetFormatError(f"Dataset has more than the declared {n} rows.")
            try:
                row = [float(value) for value in line.split()]
            except ValueError:
                raise DatasetFormatError(f"Row {len(rows) + 1} contains a non-numeric value.")
            if not np.isfinite(row).all():
                raise DatasetFormatError(f"Row {len(rows) + 1} contains a non-finite value.")
            if len(row) != d:
                raise RowLengthError(f"Row {len(rows) + 1} has {len(row)} values, expected {d}.")
            rows.append(row)
    if len(rows) < n:
        raise ShortFileError(f"Dataset declares {n} rows but holds {len(rows)}.")
    return Dataset(np.array(rows, dtype=np.float64).reshape(n, d), dim=d)


def _load_binary(path: PathLike) -> Dataset:
    payload = Path(path).read_bytes()
    if len(payload) < len(MAGIC) + HEADER.size or payload[:len(MAGIC)] != MAGIC:
        raise MalformedHeaderError("Binary dataset must start with FANN and two uint32 values.")
    n, d = HEADER.unpack_from(payload, len(MAGIC))
    if d < 1:
        raise MalformedHeaderError(f"Header declares d={d}.")
    offset = len(MAGIC) + HEADER.size
    expected = n * d * VALUE_DTYPE.itemsize
    if len(payload) - offset < expected:
        raise ShortFileError(f"Binary payload holds {len(payload) - offset} bytes, expected {expected}.")
    if len(payload) - offset > expected:
        raise DatasetFormatError("Binary dataset has trailing bytes after the payload.")
    values = np.frombuffer(payload, dtype=VALUE_DTYPE, count=n * d, offset=offset)
    finite = np.isfinite(values)
    if not finite.all():
        row = int(np.flatnonzero(~finite)[0]) // d + 1
        raise DatasetFormatError(f"Row {row} contains a non-finite value.")
    return Dataset(values.astype(np.float64).reshape(n, d), dim=d)


def load_dataset(path: PathLike, format: Optional[str] = None) -> Dataset:
    """Read a dataset; the format is sniffed from the magic bytes when not given.

    Raises:
        MalformedHeaderError: If the header is missing or does not parse.
        ShortFileError: If the file ends before the declared rows.
        RowLengthError: If a text row does not have d values.
        DatasetFormatError: For non-ASCII text, non-numeric or non-finite
        values and any other content problem.
    """
    kind = DatasetFormat(format) if format else detect_format(path)
    dataset = _load_binary(path) if kind is DatasetFormat.BINARY else _load_text(path)
    logger.info(
        "Dataset loaded",
        extra={'event_type': 'dataset_load', 'path': str(path), 'format': kind.value,
               'n': dataset.n, 'dim': dataset.dim}
    )
    return dataset


def save_dataset(dataset: Dataset, path: PathLike, format: str = DatasetFormat.TEXT) -> None:
    """Write ``dataset``; binary output stores float32 values."""
    kind = DatasetFormat(format)
    if kind is DatasetFormat.BINARY:
        with open(path, "wb") as handle:
            handle.write(MAGIC)
            handle.write(HEADER.pack(dataset.n, dataset.dim))
            handle.write(dataset.points.astype(VALUE_DTYPE).tobytes(order="C"))
        return
    with open(path, "w", encoding="ascii") as handle:
        handle.write(f"{dataset.n} {dataset.dim}\n")
        if dataset.n:
            np.savetxt(handle, dataset.points, fmt="%.17g", delimiter=" ")


def save_structure(structure: Any, path: PathLike, meta: Optional[dict] = None) -> None:
    envelope = {
        'format': STRUCTURE_FORMAT,
        'version': STRUCTURE_VERSION,
        'meta': dict(meta or {}),
        'structure': structure,
    }
    with open(path, "wb") as handle:
        pickle.dump(envelope, handle, protocol=pickle.HIGHEST_PROTOCOL)


def load_structure(path: PathLike) -> Tuple[Any, dict]:
    """Return (structure, meta) from a file written by ``save_structure``.

    Raises:
        DatasetFormatError: If the file is not a structure envelope.
    """
    with open(path, "rb") as handle:
        try:
            envelope = pickle.load(handle)
        except (pickle.UnpicklingError, EOFError, ValueError, KeyError, IndexError,
                AttributeError, ImportError, TypeError) as exc:
            raise DatasetFormatError(f"Not a structure file: {exc}")
    if not isinstance(envelope, dict) or envelope.get('format') != STRUCTURE_FORMAT:
        raise DatasetFormatError("Not a structure file.")
    if envelope.get('version') != STRUCTURE_VERSION:
        raise DatasetFormatError(f"Unsupported structure version {envelope.get('version')}.")
    return envelope['structure'], envelope['meta']
