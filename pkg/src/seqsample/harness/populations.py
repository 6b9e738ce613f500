"""Synthetic populations and store generation.

Stores are written with a fixed-width float format (sign, three integer
digits, six decimals), so every line of a single-column store has the
same byte length and byte-offset addressing is uniform over lines.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from .. import rng as rngmod
from ..estimators import Kind, PopulationMoments
from ..line_store import ByteAddressedFile, open_store

FLOAT_FMT = "{:+011.6f}"
CHUNK_ROWS = 1 << 16
SIDECAR_SUFFIX = ".meta"


@dataclass(frozen=True)
class Normal:
    mu: float = 0.0
    sigma2: float = 1.0

    columns = ("x",)

    def draw(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return (self.mu + math.sqrt(self.sigma2) * rng.standard_normal(size)).reshape(size, 1)

    def moments(self) -> PopulationMoments:
        return PopulationMoments(mu=self.mu, sigma2=self.sigma2, gamma=3.0)

    def truth(self, kind: Kind):
        kind = Kind(kind)
        if kind is Kind.MEAN:
            return self.mu
        if kind is Kind.SIN_MEAN:
            return math.sin(self.mu)
        if kind is Kind.CV:
            return math.sqrt(self.sigma2) / self.mu
        raise ValueError(f"{kind.value} is not defined for a univariate normal")


@dataclass(frozen=True)
class BivariateNormal:
    mu_x: float = 0.0
    mu_y: float = 0.0
    sigma_x: float = 1.0
    sigma_y: float = 1.0
    sigma_xy: float = 0.5

    columns = ("x", "y")

    def covariance(self) -> np.ndarray:
        return np.array([[self.sigma_x**2, self.sigma_xy], [self.sigma_xy, self.sigma_y**2]])

    def draw(self, rng, size):
        L = np.linalg.cholesky(self.covariance())
        return rng.standard_normal((size, 2)) @ L.T + np.array([self.mu_x, self.mu_y])

    def truth(self, kind: Kind):
        if Kind(kind) is not Kind.CORRELATION:
            raise ValueError("bivariate population only defines the correlation")
        return self.sigma_xy / (self.sigma_x * self.sigma_y)


@dataclass(frozen=True)
class RegressionDesign:
    """Gaussian covariates with ``cov(x_i, x_j) = decay**|i-j|`` and unit variances."""

    p: int = 3
    cov_decay: float = 0.5
    beta: Tuple[float, ...] = (3.0, 1.5, 0.0, -0.5)
    noise_sigma2: float = 1.0

    def __post_init__(self):
        if len(self.beta) != self.p + 1:
            raise ValueError("beta needs p + 1 entries (intercept first)")

    @property
    def columns(self):
        return tuple(f"x{j + 1}" for j in range(self.p)) + ("y",)

    def covariance(self) -> np.ndarray:
        idx = np.arange(self.p)
        return self.cov_decay ** np.abs(idx[:, None] - idx[None, :])

    def draw(self, rng, size):
        L = np.linalg.cholesky(self.covariance())
        X = rng.standard_normal((size, self.p)) @ L.T
        eps = math.sqrt(self.noise_sigma2) * rng.standard_normal(size)
        b = np.asarray(self.beta)
        y = b[0] + X @ b[1:] + eps
        return np.column_stack([X, y])

    def truth(self, kind: Kind):
        if Kind(kind) is not Kind.OLS:
            raise ValueError("regression design only defines OLS coefficients")
        return np.asarray(self.beta, dtype=float)


@dataclass(frozen=True)
class FlightsSynthetic:
    """Raw airline-style rows: day of week, departure time, arrival delay.

    Positive delays are log-normal with a log-mean that shifts by
    departure-time bin and weekday; a share of rows is early/on time
    (non-positive delay) or has a missing delay, as in the real data.
    """

    intercept: float = 2.04
    bin_effects: Tuple[float, float, float] = (0.22, 0.46, 0.59)  # afternoon, evening, midnight
    day_effects: Tuple[float, ...] = (0.02, 0.05, 0.08, 0.10, -0.04, 0.03)  # Tue..Sun
    noise_sd: float = 1.0
    p_nonpositive: float = 0.45
    p_missing: float = 0.01

    columns = ("DayOfWeek", "DepTime", "ArrDelay")

    def log_mean(self, dep_bin: np.ndarray, dow: np.ndarray) -> np.ndarray:
        eff = np.concatenate([[0.0], self.bin_effects])
        day = np.concatenate([[0.0], self.day_effects])
        return self.intercept + eff[dep_bin] + day[dow - 1]

    def truth(self, kind: Kind):
        if Kind(kind) is not Kind.OLS:
            raise ValueError("flights population only defines OLS coefficients")
        return np.concatenate([[self.intercept], self.bin_effects, self.day_effects])


@dataclass
class PopulationSpec:
    kind: object
    seed: int = 0
    label: str = ""


def parse_spec(text: str, seed: int = 0) -> PopulationSpec:
    """``normal:MU,SIGMA2`` | ``bivariate[:MX,MY,SX,SY,SXY]`` | ``regression`` | ``flights``."""
    name, _, args = text.partition(":")
    nums = [float(a) for a in args.split(",") if a.strip()] if args else []
    name = name.strip().lower()
    try:
        if name == "normal":
            kind = Normal(*nums)
        elif name == "bivariate":
            kind = BivariateNormal(*nums)
        elif name == "regression":
            kind = RegressionDesign() if not nums else RegressionDesign(cov_decay=nums[0])
        elif name == "flights":
            if nums:
                raise TypeError("flights takes no parameters")
            kind = FlightsSynthetic()
        else:
            raise ValueError(f"unknown population {name!r}")
    except TypeError as exc:
        raise ValueError(f"bad parameters for {name!r}: {exc}") from None
    return PopulationSpec(kind, seed, label=text)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + SIDECAR_SUFFIX)


def write_sidecar(path, meta: Dict[str, object]) -> Path:
    out = sidecar_path(path)
    with open(out, "w") as fh:
        for k, v in meta.items():
            fh.write(f"{k}={v}\n")
    return out


def read_sidecar(path) -> Optional[Dict[str, str]]:
    side = sidecar_path(path)
    if not side.exists():
        return None
    meta = {}
    for line in side.read_text().splitlines():
        if "=" in line:
            k, _, v = line.partition("=")
            meta[k.strip()] = v.strip()
    return meta


def format_rows(block: np.ndarray) -> str:
    if block.shape[1] == 1:
        return "\n".join(map(FLOAT_FMT.format, block[:, 0].tolist())) + "\n"
    row = ",".join([FLOAT_FMT] * block.shape[1])
    return "\n".join(row.format(*r) for r in block.tolist()) + "\n"


def generate_dataset(spec: PopulationSpec, N: int, path) -> ByteAddressedFile:
    """Write ``N`` records drawn from ``spec`` to ``path`` plus a sidecar.

    Output is a pure function of ``(spec, N)``.  Rows are produced in
    fixed-size chunks, so memory does not grow with ``N``.  A
    :class:`FlightsSynthetic` spec writes the raw CSV (with header) that
    :func:`~seqsample.harness.flights.preprocess_flights` consumes.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    pop = spec.kind
    if isinstance(pop, FlightsSynthetic):
        from .flights import generate_raw_flights

        return generate_raw_flights(pop, N, path, spec.seed)
    rng = rngmod.stream(spec.seed, rngmod.DATA)
    with open(path, "w", newline="\n") as fh:
        left = N
        while left:
            rows = min(CHUNK_ROWS, left)
            fh.write(format_rows(pop.draw(rng, rows)))
            left -= rows
    write_sidecar(path, {
        "format": "seqsample-store-1",
        "columns": ",".join(pop.columns),
        "n_records": N,
        "response_col": len(pop.columns) - 1 if isinstance(pop, RegressionDesign) else "",
        "spec": spec.label or repr(pop),
        "seed": spec.seed,
    })
    return open_store(path)


@dataclass(frozen=True)
class Example:
    number: int
    population: object
    kind: Kind
    response_col: int = -1

    @property
    def truth(self):
        return self.population.truth(self.kind)

    def var_star(self, n: int, B: int, N: int) -> Optional[float]:
        from ..estimators import NoClosedForm, theoretical_var_star

        if not hasattr(self.population, "moments"):
            return None
        try:
            return theoretical_var_star(self.kind, self.population.moments(), n, B, N)
        except NoClosedForm:
            return None


EXAMPLES = {
    1: Example(1, Normal(0.0, 1.0), Kind.MEAN),
    2: Example(2, Normal(1.0, 1.0), Kind.SIN_MEAN),
    3: Example(3, Normal(1.0, 1.0), Kind.CV),
    4: Example(4, BivariateNormal(0.0, 0.0, 1.0, 1.0, 0.5), Kind.CORRELATION),
    5: Example(5, RegressionDesign(), Kind.OLS),
}
