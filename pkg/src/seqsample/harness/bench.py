"""Hard-drive sampling cost (HDSC) benchmark, SAS against RAS.

Runs strictly serially.  ``cache_mode="cold-best-effort"`` copies the
store to a fresh file before every repetition and asks the kernel to drop
its pages (``posix_fadvise(DONTNEED)``); whether that really empties the
page cache depends on the OS, so every row records the mode it ran under.
"""

from __future__ import annotations

import csv
import os
import shutil
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .. import rng as rngmod
from ..line_store import ByteAddressedFile, open_store
from ..sampler import Mode, SubsamplePlan, addressing_total, draw_batch

CACHE_MODES = ("warm", "cold-best-effort")


@dataclass
class BenchRow:
    n: int
    B: int
    mode: str
    reps: int
    cache_mode: str
    hdsc_mean: float = float("nan")
    hdsc_sd: float = float("nan")
    addressing_cost_mean: float = float("nan")
    io_cost_mean: float = float("nan")
    addressing_ops: int = 0
    estimate_mse: float = float("nan")
    error: str = ""


def _drop_cache(path: Path) -> None:
    if not hasattr(os, "posix_fadvise"):
        return
    fd = os.open(path, os.O_RDONLY)
    try:
        os.fsync(fd)
        os.posix_fadvise(fd, 0, 0, os.POSIX_FADV_DONTNEED)
    except OSError:
        pass
    finally:
        os.close(fd)


def _cold_copy(src: Path, workdir: Path, rep: int) -> Path:
    dst = workdir / f"cold_{rep}{src.suffix}"
    shutil.copyfile(src, dst)
    _drop_cache(dst)
    return dst


def bench_hdsc(file, grid: Sequence[Tuple[int, int]], modes: Iterable[str] = ("sas", "ras"),
               repetitions: int = 5, cache_mode: str = "warm", seed: int = 0,
               truth: Optional[float] = None) -> List[BenchRow]:
    """Mean HDSC per ``(n, B, mode)`` cell over ``repetitions`` batches.

    ``truth``, when given, is used to report the MSE of the combined mean
    (first field) across repetitions.
    """
    if cache_mode not in CACHE_MODES:
        raise ValueError(f"cache mode must be one of {CACHE_MODES}")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    own = not isinstance(file, ByteAddressedFile)
    handle = open_store(file) if own else file
    src = handle.path
    N = handle.n_records
    modes = [Mode(m).value for m in modes]
    worst = max(n * B for n, B in grid)
    if worst > N:
        if own:
            handle.close()
        raise ValueError(f"store has {N} records, fewer than the largest n*B = {worst}")
    workdir = Path(tempfile.mkdtemp(prefix="seqsample-bench-")) if cache_mode != "warm" else None
    rows: List[BenchRow] = []
    try:
        for ci, (n, B) in enumerate(grid):
            for mi, mode in enumerate(modes):
                row = BenchRow(n, B, mode, repetitions, cache_mode)
                try:
                    hd, ad, io, est = [], [], [], []
                    for rep in range(repetitions):
                        rng = rngmod.stream(seed, ci, mi, rep)
                        plan = SubsamplePlan(n, B, mode)
                        if workdir is not None:
                            path = _cold_copy(src, workdir, rep)
                            with open_store(path, handle.buffer_size, handle.probe_size, n_records=N) as fh:
                                subs, timing = draw_batch(fh, plan, rng)
                            path.unlink()
                        else:
                            subs, timing = draw_batch(handle, plan, rng)
                        hd.append(timing.hdsc)
                        ad.append(timing.addressing_cost)
                        io.append(timing.io_cost)
                        row.addressing_ops = addressing_total(subs)
                        if truth is not None:
                            est.append(np.mean([s.values()[:, 0].mean() for s in subs]))
                    row.hdsc_mean = float(np.mean(hd))
                    row.hdsc_sd = float(np.std(hd, ddof=1)) if repetitions > 1 else 0.0
                    row.addressing_cost_mean = float(np.mean(ad))
                    row.io_cost_mean = float(np.mean(io))
                    if est:
                        row.estimate_mse = float(np.mean((np.array(est) - truth) ** 2))
                except Exception as exc:  # annotated, not fatal
                    row.error = repr(exc)
                rows.append(row)
    finally:
        if own:
            handle.close()
        if workdir is not None:
            shutil.rmtree(workdir, ignore_errors=True)
    return rows


def table4_layout(rows: List[BenchRow]) -> List[dict]:
    """One line per ``(n, B)`` with SAS and RAS HDSC side by side."""
    cells = {}
    for r in rows:
        cell = cells.setdefault((r.n, r.B), {"n": r.n, "B": r.B, "cache_mode": r.cache_mode})
        cell[f"hdsc_{r.mode}"] = r.hdsc_mean
        cell[f"mse_{r.mode}"] = r.estimate_mse
        cell[f"addressing_ops_{r.mode}"] = r.addressing_ops
    for cell in cells.values():
        if "hdsc_sas" in cell and "hdsc_ras" in cell and cell["hdsc_sas"] > 0:
            cell["ras_over_sas"] = cell["hdsc_ras"] / cell["hdsc_sas"]
    return list(cells.values())


def write_bench_csv(rows: List[BenchRow], path) -> Path:
    with open(path, "w", newline="") as fh:
        fields = list(asdict(rows[0]).keys()) if rows else list(BenchRow.__dataclass_fields__)
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow(asdict(r))
    return Path(path)
