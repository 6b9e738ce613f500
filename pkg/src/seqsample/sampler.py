"""Random-addressing (RAS) and sequential-addressing (SAS) subsampling.

RAS pays one random seek per record.  SAS pays a single random seek per
subsample and then reads ``n`` consecutive lines of a pre-shuffled store,
wrapping to the top of the file at EOF.

Each subsample carries a :class:`TimingBreakdown`: time spent seeking and
realigning to a line header (addressing) and time spent pulling line
bytes into memory (I/O).  Field parsing is not timed.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .line_store import (
    TERMINATOR,
    ByteAddressedFile,
    ParseError,
    Record,
    StoreError,
    find_terminator,
    parse_fields,
    strip_cr,
)

_clock = time.perf_counter


class Mode(str, enum.Enum):
    RAS = "ras"
    SAS = "sas"


class Addressing(str, enum.Enum):
    BYTE = "byte"  # draw p_b uniformly on {0..n_f}, as in the algorithms
    LINE = "line"  # draw a line index uniformly; needs the header table


@dataclass
class TimingBreakdown:
    addressing_cost: float = 0.0
    io_cost: float = 0.0

    @property
    def hdsc(self) -> float:
        return self.addressing_cost + self.io_cost

    def __add__(self, other: "TimingBreakdown") -> "TimingBreakdown":
        return TimingBreakdown(self.addressing_cost + other.addressing_cost,
                               self.io_cost + other.io_cost)


@dataclass
class SubsamplePlan:
    n: int
    B: int
    mode: Mode = Mode.SAS
    seed: int = 0
    wrap: bool = True
    addressing: Addressing = Addressing.BYTE

    def __post_init__(self):
        self.mode = Mode(self.mode)
        self.addressing = Addressing(self.addressing)
        if self.n < 1:
            raise ValueError("subsample size n must be >= 1")
        if self.B < 2:
            raise ValueError("number of subsamples B must be >= 2")

    def check(self, n_records: int) -> None:
        if self.n > n_records:
            raise ValueError(f"subsample size n={self.n} exceeds N={n_records}")


@dataclass
class Subsample:
    lines: List[bytes]
    origins: np.ndarray
    start_offset: int
    addressing_ops: int
    timing: TimingBreakdown = field(default_factory=TimingBreakdown)
    wrapped: bool = False
    rejected: int = 0

    def __len__(self):
        return len(self.lines)

    @property
    def records(self) -> List[Record]:
        return [Record(raw, int(off)) for raw, off in zip(self.lines, self.origins)]

    def values(self) -> np.ndarray:
        """Numeric fields as an ``(n, n_fields)`` float array."""
        width = self.lines[0].count(b",") + 1
        try:
            flat = np.array(b",".join(self.lines).split(b","), dtype=float)
            return flat.reshape(len(self.lines), width)
        except ValueError:
            for raw, off in zip(self.lines, self.origins):
                vals = parse_fields(raw, int(off))
                if len(vals) != width:
                    raise ParseError(f"expected {width} fields, got {len(vals)}", int(off))
            raise


def draw_start_offset(rng: np.random.Generator, n_f: int) -> int:
    """Uniform integer on ``{0, 1, ..., n_f}`` (both ends included)."""
    return int(rng.integers(0, n_f, endpoint=True))


def _line_start(file: ByteAddressedFile, rng, index: Optional[np.ndarray]):
    """Draw a start and realign; returns ``(p_b, header)``."""
    if index is None:
        p_b = draw_start_offset(rng, file.n_f)
        t = find_terminator(file, p_b)
        h = 0 if t < 0 or t + 1 >= file.n_f else t + 1
        return p_b, h
    h = int(index[int(rng.integers(0, len(index)))])
    return h, h


def ras_subsample(file: ByteAddressedFile, n: int, rng: np.random.Generator,
                  index: Optional[np.ndarray] = None) -> Subsample:
    """Draw ``n`` records, each through its own random seek.

    Records are independent draws, so duplicates are possible.
    """
    lines: List[bytes] = []
    origins = np.empty(n, dtype=np.int64)
    t_addr = t_io = 0.0
    first = -1
    for i in range(n):
        t0 = _clock()
        p_b, h = _line_start(file, rng, index)
        t1 = _clock()
        end = find_terminator(file, h)
        raw = file.pread(h, end - h)
        t2 = _clock()
        t_addr += t1 - t0
        t_io += t2 - t1
        lines.append(strip_cr(raw))
        origins[i] = h
        if i == 0:
            first = p_b
    return Subsample(lines, origins, first, n, TimingBreakdown(t_addr, t_io))


def _read_window(file: ByteAddressedFile, h: int, n: int, wrap: bool):
    """Read ``n`` consecutive lines from header ``h``.

    Returns ``(lines, origins, wrapped)``; ``lines`` is None when the window
    would cross EOF and ``wrap`` is False.
    """
    lines: List[bytes] = []
    origins: List[int] = []
    wrapped = False
    pos = h
    carry = b""
    carry_at = h
    while len(lines) < n:
        if pos >= file.n_f:
            if not wrap:
                return None, None, True
            wrapped = True
            pos = carry_at = 0
            carry = b""
        chunk = file.pread(pos, min(file.buffer_size, file.n_f - pos))
        lo = 0
        while len(lines) < n:
            idx = chunk.find(TERMINATOR, lo)
            if idx < 0:
                break
            if carry:
                lines.append(strip_cr(carry + chunk[lo:idx]))
                origins.append(carry_at)
                carry = b""
            else:
                lines.append(strip_cr(chunk[lo:idx]))
                origins.append(pos + lo)
            lo = idx + 1
        if len(lines) < n and lo < len(chunk):
            if not carry:
                carry_at = pos + lo
            carry += chunk[lo:]
        pos += len(chunk)
    return lines, np.asarray(origins, dtype=np.int64), wrapped


def sas_subsample(file: ByteAddressedFile, n: int, rng: np.random.Generator,
                  wrap: bool = True, index: Optional[np.ndarray] = None,
                  max_rejections: int = 10_000) -> Subsample:
    """One random seek, then ``n`` circularly consecutive lines.

    With ``wrap=False`` a start whose window would run past EOF is
    discarded and redrawn, so only the non-wrapping windows are used.
    Every seek, including rejected ones, counts toward ``addressing_ops``.
    """
    t_addr = t_io = 0.0
    ops = 0
    for attempt in range(max_rejections + 1):
        t0 = _clock()
        p_b, h = _line_start(file, rng, index)
        t1 = _clock()
        lines, origins, wrapped = _read_window(file, h, n, wrap)
        t2 = _clock()
        ops += 1
        t_addr += t1 - t0
        t_io += t2 - t1
        if lines is not None:
            return Subsample(lines, origins, p_b, ops, TimingBreakdown(t_addr, t_io),
                             wrapped=wrapped, rejected=attempt)
    raise StoreError(f"no non-wrapping window of {n} lines found in {max_rejections} draws")


def draw_batch(file: ByteAddressedFile, plan: SubsamplePlan,
               rng: Optional[np.random.Generator] = None) -> Tuple[List[Subsample], TimingBreakdown]:
    """``B`` independent subsamples with i.i.d. start offsets."""
    plan.check(file.n_records)
    rng = rng if rng is not None else np.random.default_rng(plan.seed)
    index = file.header_index() if plan.addressing is Addressing.LINE else None
    subs: List[Subsample] = []
    total = TimingBreakdown()
    for _ in range(plan.B):
        if plan.mode is Mode.SAS:
            s = sas_subsample(file, plan.n, rng, wrap=plan.wrap, index=index)
        else:
            s = ras_subsample(file, plan.n, rng, index=index)
        subs.append(s)
        total = total + s.timing
    return subs, total


def addressing_total(subsamples: List[Subsample]) -> int:
    return sum(s.addressing_ops for s in subsamples)

