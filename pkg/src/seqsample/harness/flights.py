"""Airline-style regression data: synthetic raw rows and preprocessing.

The store produced by :func:`preprocess_flights` has one line per kept
flight::

    y,d_aft,d_eve,d_mid,dow2,dow3,dow4,dow5,dow6,dow7

where ``y`` is the log arrival delay, the ``d_*`` columns are departure
time dummies against a morning base (07:00-11:59) and ``dow*`` are day of
week dummies against Monday.  Rows with a missing, zero or negative delay
are dropped; log is undefined for zero.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import rng as rngmod
from ..line_store import ByteAddressedFile, open_store
from .populations import CHUNK_ROWS, FLOAT_FMT, FlightsSynthetic, write_sidecar

STORE_COLUMNS = ("y", "d_aft", "d_eve", "d_mid", "dow2", "dow3", "dow4", "dow5", "dow6", "dow7")
RAW_COLUMNS = ("DayOfWeek", "DepTime", "ArrDelay")
MISSING = {"", "NA", "na", "NaN", "nan"}

MORNING, AFTERNOON, EVENING, MIDNIGHT = 0, 1, 2, 3


def departure_bin(hhmm: int) -> int:
    """Bin a departure time given as ``hhmm`` (0..2400)."""
    hour, minute = divmod(hhmm, 100)
    if not (0 <= hour <= 24 and 0 <= minute < 60) or (hour == 24 and minute):
        raise ValueError(f"bad departure time {hhmm}")
    if 7 <= hour < 12:
        return MORNING
    if 12 <= hour < 18:
        return AFTERNOON
    if 18 <= hour < 24:
        return EVENING
    return MIDNIGHT


def _random_hhmm(rng, size):
    minutes = rng.integers(0, 24 * 60, size=size)
    hhmm = (minutes // 60) * 100 + minutes % 60
    # the airline files write midnight as 2400
    hhmm[hhmm == 0] = 2400
    return hhmm


def _bins(hhmm: np.ndarray) -> np.ndarray:
    hour = (hhmm // 100) % 24
    out = np.full(hhmm.shape, MIDNIGHT)
    out[(hour >= 7) & (hour < 12)] = MORNING
    out[(hour >= 12) & (hour < 18)] = AFTERNOON
    out[hour >= 18] = EVENING
    return out


def generate_raw_flights(pop: FlightsSynthetic, N: int, path, seed: int) -> Path:
    """Write ``N`` raw rows (with a header line) to ``path``."""
    rng = rngmod.stream(seed, rngmod.DATA)
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(RAW_COLUMNS) + "\n")
        left = N
        while left:
            rows = min(CHUNK_ROWS, left)
            dow = rng.integers(1, 8, size=rows)
            hhmm = _random_hhmm(rng, rows)
            y = pop.log_mean(_bins(hhmm), dow) + pop.noise_sd * rng.standard_normal(rows)
            u = rng.random(rows)
            early = rng.integers(-30, 1, size=rows)
            out = []
            for d, t, yy, uu, e in zip(dow.tolist(), hhmm.tolist(), y.tolist(), u.tolist(), early.tolist()):
                if uu < pop.p_missing:
                    delay = "NA"
                elif uu < pop.p_missing + pop.p_nonpositive:
                    delay = str(e)
                else:
                    delay = f"{math.exp(yy):.4f}"
                out.append(f"{d},{t},{delay}\n")
            fh.write("".join(out))
            left -= rows
    return Path(path)


@dataclass
class PreprocessResult:
    store: ByteAddressedFile
    sidecar: Path
    kept: int
    dropped_nonpositive: int
    dropped_missing: int
    unparseable: int


def encode_row(delay: float, hhmm: int, dow: int) -> str:
    if not 1 <= dow <= 7:
        raise ValueError(f"bad day of week {dow}")
    b = departure_bin(hhmm)
    dummies = [int(b == AFTERNOON), int(b == EVENING), int(b == MIDNIGHT)]
    dummies += [int(dow == d) for d in range(2, 8)]
    return FLOAT_FMT.format(math.log(delay)) + "," + ",".join(map(str, dummies))


def preprocess_flights(raw_csv, output_path) -> PreprocessResult:
    """Stream a raw flights CSV into a regression store plus sidecar."""
    kept = nonpos = missing = bad = 0
    with open(raw_csv, newline="") as src, open(output_path, "w", newline="\n") as dst:
        reader = csv.DictReader(src)
        absent = [c for c in RAW_COLUMNS if c not in (reader.fieldnames or [])]
        if absent:
            raise ValueError(f"raw flights file lacks columns {absent}")
        for row in reader:
            delay_s = (row.get("ArrDelay") or "").strip()
            if delay_s in MISSING:
                missing += 1
                continue
            try:
                delay = float(delay_s)
                if not math.isfinite(delay):
                    raise ValueError(delay_s)
                if delay <= 0:
                    nonpos += 1
                    continue
                line = encode_row(delay, int(float(row["DepTime"])), int(float(row["DayOfWeek"])))
            except (ValueError, TypeError):
                bad += 1
                continue
            dst.write(line + "\n")
            kept += 1
    if kept == 0:
        raise ValueError("no usable rows after preprocessing")
    side = write_sidecar(output_path, {
        "format": "seqsample-store-1",
        "columns": ",".join(STORE_COLUMNS),
        "n_records": kept,
        "response_col": 0,
        "response": "y=log(ArrDelay)",
        "base_departure": "morning(07:00-11:59)",
        "base_day": "monday",
        "dropped_nonpositive": nonpos,
        "dropped_missing": missing,
        "unparseable": bad,
    })
    return PreprocessResult(open_store(output_path), side, kept, nonpos, missing, bad)
