"""Reader/writer for NPY v1.0 matrices and the anomaly-label CSV table.

The NPY codec is written against the format grammar directly (magic,
version, little-endian header length, ASCII dict header, raw payload)
instead of going through ``np.load``/``np.save``, so that malformed or
truncated files are rejected with a specific error rather than a generic
one. Matrices are 2-D float64 ndarrays; 1-D payloads become ``(n, 1)``.
"""

from __future__ import annotations

import ast
import csv
import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .exceptions import (
    BadMagic,
    FortranOrderUnsupported,
    MalformedRow,
    NonFiniteInput,
    NpyFormatError,
    SegmentOutOfRange,
    TruncatedPayload,
    UnknownSpacecraft,
    UnsupportedDtype,
    UnsupportedVersion,
)

MAGIC = b"\x93NUMPY"
_PREAMBLE = 10  # magic(6) + version(2) + header_len(2)
_ALIGN = 64
_DTYPES = {"<f8": "<f8", "<f4": "<f4", "<i8": "<i8", "<i4": "<i4"}
SPACECRAFT = ("SMAP", "MSL")
LABEL_COLUMNS = ("chan_id", "spacecraft", "anomaly_sequences", "num_values")


def as_matrix(data) -> np.ndarray:
    """Coerce ``data`` to a finite, C-ordered 2-D float64 matrix."""
    m = np.asarray(data, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise ValueError(f"matrix must be 1-D or 2-D, got {m.ndim}-D")
    if not np.all(np.isfinite(m)):
        raise NonFiniteInput("matrix contains NaN or Inf")
    return np.ascontiguousarray(m)


def _truncated(data: bytes, need: int, what: str) -> TruncatedPayload:
    return TruncatedPayload(f"{what}: need {need} bytes, have {len(data)}")


def parse_npy(data: bytes) -> np.ndarray:
    """Decode an NPY v1.0 byte string into a float64 matrix.

    Raises
    ------
    BadMagic, UnsupportedVersion, UnsupportedDtype, FortranOrderUnsupported,
    TruncatedPayload, NonFiniteInput
    """
    data = bytes(data)
    if len(data) < len(MAGIC):
        if MAGIC.startswith(data):
            raise _truncated(data, len(MAGIC), "magic")
        raise BadMagic(f"bad magic {data!r}")
    if data[:6] != MAGIC:
        raise BadMagic(f"bad magic {data[:6]!r}")
    if len(data) < _PREAMBLE:
        raise _truncated(data, _PREAMBLE, "preamble")
    major, minor = data[6], data[7]
    if (major, minor) != (1, 0):
        raise UnsupportedVersion(f"NPY version {major}.{minor}")
    (hlen,) = struct.unpack("<H", data[8:10])
    if len(data) < _PREAMBLE + hlen:
        raise _truncated(data, _PREAMBLE + hlen, "header")
    raw_header = data[_PREAMBLE:_PREAMBLE + hlen]
    try:
        header = ast.literal_eval(raw_header.decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise NpyFormatError(f"unparseable header {raw_header!r}") from exc
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise NpyFormatError(f"malformed header dict {header!r}")

    descr = header["descr"]
    if descr not in _DTYPES:
        raise UnsupportedDtype(f"dtype {descr!r} not in {sorted(_DTYPES)}")
    if header["fortran_order"] is not False:
        raise FortranOrderUnsupported("only C-order arrays are supported")
    shape = header["shape"]
    if (not isinstance(shape, tuple) or len(shape) not in (1, 2)
            or not all(isinstance(s, int) and s >= 0 for s in shape)):
        raise NpyFormatError(f"shape {shape!r} is not 1-D or 2-D")

    count = 1
    for s in shape:
        count *= s
    dtype = np.dtype(_DTYPES[descr])
    need = _PREAMBLE + hlen + count * dtype.itemsize
    if len(data) != need:
        raise _truncated(data, need, "payload")
    payload = np.frombuffer(data, dtype=dtype, count=count, offset=_PREAMBLE + hlen)
    rows, cols = (shape[0], 1) if len(shape) == 1 else shape
    return as_matrix(payload.astype(np.float64).reshape(rows, cols))


def write_npy(m) -> bytes:
    """Encode a matrix as NPY v1.0, ``<f8``, C order."""
    m = as_matrix(m)
    header = "{'descr': '<f8', 'fortran_order': False, 'shape': (%d, %d), }" % m.shape
    # pad so preamble + header + '\n' is a multiple of the alignment
    total = _PREAMBLE + len(header) + 1
    header = header + " " * (-total % _ALIGN) + "\n"
    out = bytearray(MAGIC)
    out += b"\x01\x00"
    out += struct.pack("<H", len(header))
    out += header.encode("latin1")
    out += m.astype("<f8").tobytes(order="C")
    return bytes(out)


def load_npy(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return parse_npy(fh.read())


def save_npy(path, m) -> None:
    with open(path, "wb") as fh:
        fh.write(write_npy(m))


@dataclass(frozen=True)
class LabelEntry:
    channel_id: str
    spacecraft: str
    anomaly_segments: tuple[tuple[int, int], ...]
    num_values: int


@dataclass
class LabelTable:
    entries: list[LabelEntry] = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def get(self, channel_id: str) -> LabelEntry | None:
        for entry in self.entries:
            if entry.channel_id == channel_id:
                return entry
        return None

    def channels(self, spacecraft: str | None = None) -> list[str]:
        return [e.channel_id for e in self.entries
                if spacecraft is None or e.spacecraft == spacecraft]

    def total_values(self, spacecraft: str) -> int:
        return sum(e.num_values for e in self.entries if e.spacecraft == spacecraft)


def _parse_segments(text: str, num_values: int, where: str):
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MalformedRow(f"{where}: bad anomaly_sequences {text!r}") from exc
    if not isinstance(raw, list):
        raise MalformedRow(f"{where}: anomaly_sequences must be a list")
    segments = []
    for seg in raw:
        if (not isinstance(seg, list) or len(seg) != 2
                or not all(isinstance(v, int) for v in seg)):
            raise MalformedRow(f"{where}: bad segment {seg!r}")
        start, end = seg
        if not 0 <= start <= end < num_values:
            raise SegmentOutOfRange(
                f"{where}: segment [{start}, {end}] outside [0, {num_values})")
        segments.append((start, end))
    return tuple(segments)


def parse_labels_csv(text: str) -> LabelTable:
    """Parse the labeled-anomalies table.

    Expected columns: ``chan_id, spacecraft, anomaly_sequences, num_values``.
    Extra columns (the public file also carries ``class``) are ignored.
    A headerless single data row is also accepted, with the four columns in
    that order.
    """
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        return LabelTable()
    first = [c.strip() for c in rows[0]]
    if set(LABEL_COLUMNS) <= set(first):
        index = {name: first.index(name) for name in LABEL_COLUMNS}
        width = len(first)
        body = rows[1:]
        start_line = 2
    else:
        index = {name: i for i, name in enumerate(LABEL_COLUMNS)}
        width = len(LABEL_COLUMNS)
        body = rows
        start_line = 1

    table = LabelTable()
    seen = set()
    for lineno, row in enumerate(body, start=start_line):
        where = f"line {lineno}"
        if len(row) != width:
            raise MalformedRow(f"{where}: expected {width} columns, got {len(row)}")
        chan = row[index["chan_id"]].strip()
        craft = row[index["spacecraft"]].strip()
        if craft not in SPACECRAFT:
            raise UnknownSpacecraft(f"{where}: spacecraft {craft!r}")
        try:
            num_values = int(row[index["num_values"]])
        except ValueError as exc:
            raise MalformedRow(f"{where}: num_values {row[index['num_values']]!r}") from exc
        segments = _parse_segments(row[index["anomaly_sequences"]], num_values, where)
        if (craft, chan) in seen:
            raise MalformedRow(f"{where}: duplicate channel {chan!r} for {craft}")
        seen.add((craft, chan))
        table.entries.append(LabelEntry(chan, craft, segments, num_values))
    return table


def load_labels_csv(path) -> LabelTable:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_labels_csv(fh.read())
