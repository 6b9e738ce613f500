"""Byte-offset access to line-oriented store files.

A store is a plain text file with one record per line, comma separated
numeric fields, and a single line-feed terminating every line (including
the last one).  Everything here addresses the file by *byte* offset, the
way a random seek on a hard drive does, and realigns to line headers by
scanning for terminators.

Realignment rule
----------------
``advance_to_next_header`` always moves to the first header *strictly
after* the current position, even when the cursor already sits on a
header.  Seeking to offset 0 therefore selects the second line, and a
cursor inside (or at the start of) the last line wraps to offset 0.  With
offsets drawn uniformly from ``{0, ..., n_f}`` line ``i`` is selected with
probability proportional to the byte length of line ``i - 1`` (circularly,
line 1 picks up the extra ``n_f`` offset).  Fixed-width stores make this
uniform over lines; ``header_index`` provides a line table for callers
that need exact line-uniform addressing.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

TERMINATOR = b"\n"
NEWLINE = 0x0A
DEFAULT_BUFFER_SIZE = 64 * 1024
DEFAULT_PROBE_SIZE = 256


class StoreError(ValueError):
    """Malformed store file or invalid access."""


class ParseError(StoreError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (line at byte offset {offset})")
        self.offset = offset


class VisitorError(StoreError):
    """A scan visitor raised; ``offset`` is the header of the failing record."""

    def __init__(self, offset: int, cause: BaseException):
        super().__init__(f"visitor failed on record at byte offset {offset}: {cause!r}")
        self.offset = offset


class ByteAddressedFile:
    """Read-only handle on a store file.

    Reads go through ``os.pread`` so a handle carries no hidden file
    position; cursors hold positions instead.  ``n_f`` is fixed when the
    handle is opened.
    """

    def __init__(self, path, buffer_size: int = DEFAULT_BUFFER_SIZE,
                 probe_size: int = DEFAULT_PROBE_SIZE, n_records: Optional[int] = None):
        self.path = Path(path)
        if buffer_size < 1 or probe_size < 1:
            raise ValueError("buffer_size and probe_size must be positive")
        self.buffer_size = buffer_size
        self.probe_size = probe_size
        if not self.path.is_file():
            raise FileNotFoundError(f"no such store: {self.path}")
        self._fd = os.open(self.path, os.O_RDONLY)
        try:
            self._n_f = os.fstat(self._fd).st_size
            if self._n_f == 0:
                raise StoreError("empty store")
            if os.pread(self._fd, 1, self._n_f - 1) != TERMINATOR:
                raise StoreError("unterminated final line")
        except BaseException:
            os.close(self._fd)
            self._fd = -1
            raise
        # a known line count (e.g. from a sidecar) skips the counting pass
        self._n_records: Optional[int] = n_records
        self._headers: Optional[np.ndarray] = None

    @property
    def n_f(self) -> int:
        return self._n_f

    @property
    def terminator(self) -> bytes:
        return TERMINATOR

    @property
    def closed(self) -> bool:
        return self._fd < 0

    def pread(self, offset: int, size: int) -> bytes:
        if self._fd < 0:
            raise StoreError("store handle is closed")
        return os.pread(self._fd, size, offset)

    def close(self) -> None:
        if self._fd >= 0:
            os.close(self._fd)
            self._fd = -1

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __del__(self):
        try:
            self.close()
        except Exception:
            pass

    def __repr__(self):
        return f"ByteAddressedFile({str(self.path)!r}, n_f={self._n_f})"

    @property
    def n_records(self) -> int:
        """Exact line count N (one sequential pass, cached)."""
        if self._n_records is None:
            self._n_records = count_records(self)
        return self._n_records

    def header_index(self) -> np.ndarray:
        """Byte offsets of every line header, in file order (cached)."""
        if self._headers is None:
            self._headers = header_offsets(self)
            self._n_records = len(self._headers)
        return self._headers


@dataclass(frozen=True)
class LineCursor:
    file: ByteAddressedFile = field(repr=False)
    position: int
    wrapped: bool = False


@dataclass(frozen=True)
class Record:
    raw: bytes
    origin_offset: int
    fields: Optional[tuple] = None

    @property
    def values(self) -> tuple:
        if self.fields is None:
            return parse_fields(self.raw, self.origin_offset)
        return self.fields


def open_store(path, buffer_size: int = DEFAULT_BUFFER_SIZE,
               probe_size: int = DEFAULT_PROBE_SIZE, n_records: Optional[int] = None) -> ByteAddressedFile:
    return ByteAddressedFile(path, buffer_size=buffer_size, probe_size=probe_size,
                             n_records=n_records)


def parse_fields(raw: bytes, offset: int = -1) -> tuple:
    try:
        return tuple(float(tok) for tok in raw.split(b","))
    except ValueError:
        raise ParseError(f"non-numeric field in {raw[:40]!r}", offset) from None


def strip_cr(raw: bytes) -> bytes:
    return raw[:-1] if raw.endswith(b"\r") else raw


def seek(file: ByteAddressedFile, p_b: int) -> LineCursor:
    if not 0 <= p_b <= file.n_f:
        raise StoreError(f"offset {p_b} outside [0, {file.n_f}]")
    return LineCursor(file, int(p_b))


def find_terminator(file: ByteAddressedFile, start: int, size: int = 0) -> int:
    """Offset of the first terminator at or after ``start``, or -1."""
    size = size or file.probe_size
    pos = start
    while pos < file.n_f:
        chunk = file.pread(pos, size)
        idx = chunk.find(TERMINATOR)
        if idx >= 0:
            return pos + idx
        pos += len(chunk)
        size *= 2
    return -1


def next_header(file: ByteAddressedFile, position: int) -> int:
    """First header strictly after ``position``; 0 when that would be EOF."""
    t = find_terminator(file, position)
    if t < 0 or t + 1 >= file.n_f:
        return 0
    return t + 1


def advance_to_next_header(cursor: LineCursor) -> LineCursor:
    file = cursor.file
    h = next_header(file, cursor.position)
    # h == 0 only on wrap: a header strictly after position is always > 0
    return LineCursor(file, h, wrapped=cursor.wrapped or h == 0)


def read_line(cursor: LineCursor, numeric: bool = True):
    """Read the whole line at ``cursor``; return ``(record, next_cursor)``."""
    file = cursor.file
    start = cursor.position
    if start >= file.n_f:
        start = 0
        cursor = LineCursor(file, 0, wrapped=True)
    t = find_terminator(file, start)
    raw = strip_cr(file.pread(start, t - start))
    fields = parse_fields(raw, start) if numeric else None
    nxt = t + 1
    if nxt >= file.n_f:
        nxt_cursor = LineCursor(file, 0, wrapped=True)
    else:
        nxt_cursor = LineCursor(file, nxt, wrapped=cursor.wrapped)
    return Record(raw, start, fields), nxt_cursor


@dataclass
class ScanSummary:
    n_records: int
    offsets: Optional[list] = None


def iter_chunks(file: ByteAddressedFile, start: int = 0, end: Optional[int] = None):
    """Yield ``(offset, bytes)`` blocks of ``buffer_size`` covering [start, end)."""
    end = file.n_f if end is None else end
    pos = start
    while pos < end:
        chunk = file.pread(pos, min(file.buffer_size, end - pos))
        if not chunk:
            raise StoreError(f"short read at offset {pos}")
        yield pos, chunk
        pos += len(chunk)


def iter_lines(file: ByteAddressedFile, start: int = 0):
    """Yield ``(header_offset, raw)`` for each line from ``start`` to EOF.

    Holds one buffer plus one partial line in memory.
    """
    carry = b""
    carry_at = start
    for pos, chunk in iter_chunks(file, start):
        lo = 0
        while True:
            idx = chunk.find(TERMINATOR, lo)
            if idx < 0:
                break
            if carry:
                yield carry_at, strip_cr(carry + chunk[lo:idx])
                carry = b""
            else:
                yield pos + lo, strip_cr(chunk[lo:idx])
            lo = idx + 1
        if lo < len(chunk):
            if not carry:
                carry_at = pos + lo
            carry += chunk[lo:]


def sequential_scan(file: ByteAddressedFile, visitor: Optional[Callable[[Record], None]] = None,
                    numeric: bool = False, collect_offsets: bool = False) -> ScanSummary:
    """Visit every record once, in file order.

    The visitor receives a :class:`Record`; anything it raises is re-raised
    as :class:`VisitorError` carrying the record's header offset.
    """
    count = 0
    offsets = [] if collect_offsets else None
    for off, raw in iter_lines(file):
        if visitor is not None:
            fields = parse_fields(raw, off) if numeric else None
            try:
                visitor(Record(raw, off, fields))
            except Exception as exc:
                raise VisitorError(off, exc) from exc
        if offsets is not None:
            offsets.append(off)
        count += 1
    return ScanSummary(count, offsets)


def header_offsets(file: ByteAddressedFile) -> np.ndarray:
    """All line headers as an int64 array (vectorised sequential pass)."""
    parts = [np.zeros(1, dtype=np.int64)]
    for pos, chunk in iter_chunks(file):
        t = np.flatnonzero(np.frombuffer(chunk, dtype=np.uint8) == NEWLINE)
        parts.append(t.astype(np.int64) + (pos + 1))
    headers = np.concatenate(parts)
    # the terminator of the final line points at n_f, which is not a header
    return headers[:-1]


def count_records(file: ByteAddressedFile) -> int:
    return sum(chunk.count(TERMINATOR) for _, chunk in iter_chunks(file))
