"""Single-pass computations over a whole store."""

from __future__ import annotations

from collections import deque
from typing import Callable, Iterable, Optional, Union

import numpy as np

from ..estimators import NormalEquations, split_response
from ..line_store import ByteAddressedFile, iter_lines, open_store, parse_fields
from .populations import read_sidecar


class _Neumaier:
    __slots__ = ("s", "comp")

    def __init__(self):
        self.s = 0.0
        self.comp = 0.0

    def add(self, x: float) -> None:
        t = self.s + x
        if abs(self.s) >= abs(x):
            self.comp += (self.s - t) + x
        else:
            self.comp += (x - t) + self.s
        self.s = t

    @property
    def value(self) -> float:
        return self.s + self.comp


def _first_field(file: ByteAddressedFile):
    for off, raw in iter_lines(file):
        yield parse_fields(raw, off)[0]


def exact_all_windows_mean(source: Union[ByteAddressedFile, Iterable[float], str],
                           n: int, on_window: Optional[Callable[[float], None]] = None) -> float:
    """Average of the means of all ``N - n + 1`` non-wrapping windows of length ``n``.

    ``source`` is a store (first field used), a path to one, or any
    iterable of numbers.  One pass, keeping only the last ``n`` values.
    """
    if n < 1:
        raise ValueError("window length must be >= 1")
    own = isinstance(source, (str,)) or hasattr(source, "__fspath__")
    if own:
        source = open_store(source)
    values = _first_field(source) if isinstance(source, ByteAddressedFile) else iter(source)
    ring = deque(maxlen=n)
    window = _Neumaier()
    total = _Neumaier()
    K = 0
    try:
        for x in values:
            x = float(x)
            if len(ring) == n:
                window.add(-ring[0])
            ring.append(x)
            window.add(x)
            if len(ring) == n:
                m = window.value / n
                total.add(m)
                K += 1
                if on_window is not None:
                    on_window(m)
    finally:
        if own:
            source.close()
    if K == 0:
        raise ValueError(f"window length {n} exceeds the number of records")
    return total.value / K


def resolve_response_col(file: ByteAddressedFile, response_col: Optional[int]) -> int:
    if response_col is not None:
        return response_col
    meta = read_sidecar(file.path) or {}
    rc = meta.get("response_col", "")
    return int(rc) if rc != "" else -1


def chunked_ols(file, block_size: int = 1_000_000, response_col: Optional[int] = None) -> np.ndarray:
    """Least squares over the whole store by accumulating normal equations.

    Rows are read sequentially in blocks of ``block_size``; only one block
    is parsed at a time.  The response column comes from the store's
    sidecar when not given (last column otherwise).
    """
    if block_size < 1:
        raise ValueError("block_size must be >= 1")
    own = not isinstance(file, ByteAddressedFile)
    if own:
        file = open_store(file)
    try:
        rc = resolve_response_col(file, response_col)
        acc = None
        block = []

        def flush():
            nonlocal acc
            width = block[0].count(b",") + 1
            arr = np.array(b",".join(block).split(b","), dtype=float).reshape(len(block), width)
            X, y = split_response(arr, rc)
            if acc is None:
                acc = NormalEquations(X.shape[1])
            acc.add(X, y)
            block.clear()

        for _, raw in iter_lines(file):
            block.append(raw)
            if len(block) == block_size:
                flush()
        if block:
            flush()
        return acc.solve()
    finally:
        if own:
            file.close()
