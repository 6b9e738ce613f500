"""Subsample statistics, combined estimators and automatic inference.

Given ``B`` subsample statistics ``t_1..t_B`` (each computed on ``n``
records drawn from a store of ``N`` records), the combined estimate is
their average and its squared standard error is

    SE^2 = c / (B - 1) * sum_b (t_b - mean(t))^2,   c = n * (1/(n*B) + 1/N).

For vector statistics (regression coefficients) everything is
componentwise.  Statistics that are undefined on a particular subsample
(zero mean for a coefficient of variation, a singular design) raise
:class:`UndefinedStatistic`; :func:`combine` drops those subsamples and
records how many were excluded.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import linalg

Value = Union[float, np.ndarray]


class UndefinedStatistic(ValueError):
    """The statistic has no value on this subsample."""


class RankDeficient(UndefinedStatistic):
    pass


class NoClosedForm(ValueError):
    """No theoretical variance is available for this statistic."""


class Kind(str, enum.Enum):
    MEAN = "mean"
    SIN_MEAN = "sin"
    CV = "cv"
    CORRELATION = "corr"
    OLS = "ols"


@dataclass(frozen=True)
class SubsampleStatistic:
    value: Value
    kind: Kind


@dataclass
class PopulationMoments:
    mu: float
    sigma2: float
    gamma: float = 3.0
    gdot2: Optional[float] = None

    def __post_init__(self):
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        if self.gamma < 1:
            raise ValueError("fourth-moment ratio gamma must be >= 1")


@dataclass
class CombinedEstimate:
    point: Value
    se2: Value
    n: int
    B: int
    N: int
    c: float
    plugin: Optional[Value] = None
    excluded: int = 0

    @property
    def se(self) -> Value:
        return np.sqrt(self.se2)


# -- summation -------------------------------------------------------------

def _column_fsum(a: np.ndarray) -> np.ndarray:
    if a.ndim == 1:
        return np.array(math.fsum(a.tolist()))
    return np.array([math.fsum(col) for col in a.T.tolist()])


def _as_values(stats) -> np.ndarray:
    vals = [s.value if isinstance(s, SubsampleStatistic) else s for s in stats]
    return np.asarray(vals, dtype=float)


# -- per-subsample statistics ---------------------------------------------

def _column(data, col=0) -> np.ndarray:
    a = np.asarray(data, dtype=float)
    return a if a.ndim == 1 else a[:, col]


def subsample_mean(data) -> SubsampleStatistic:
    x = _column(data)
    if x.size == 0:
        raise ValueError("mean of an empty subsample")
    return SubsampleStatistic(math.fsum(x.tolist()) / x.size, Kind.MEAN)


def sin_mean_statistic(data) -> SubsampleStatistic:
    return SubsampleStatistic(math.sin(subsample_mean(data).value), Kind.SIN_MEAN)


def _mean_and_centered(x: np.ndarray):
    m = math.fsum(x.tolist()) / x.size
    return m, x - m


def cv_statistic(data) -> SubsampleStatistic:
    """Sample standard deviation (``n - 1`` denominator) over sample mean."""
    x = _column(data)
    if x.size < 2:
        raise ValueError("coefficient of variation needs n >= 2")
    m, d = _mean_and_centered(x)
    if m == 0.0:
        raise UndefinedStatistic("coefficient of variation undefined for zero mean")
    s = math.sqrt(math.fsum((d * d).tolist()) / (x.size - 1))
    return SubsampleStatistic(s / m, Kind.CV)


def correlation_statistic(data) -> SubsampleStatistic:
    a = np.asarray(data, dtype=float)
    if a.ndim != 2 or a.shape[1] < 2 or a.shape[0] < 2:
        raise ValueError("correlation needs n >= 2 rows of (x, y) pairs")
    _, dx = _mean_and_centered(a[:, 0])
    _, dy = _mean_and_centered(a[:, 1])
    sxx = math.fsum((dx * dx).tolist())
    syy = math.fsum((dy * dy).tolist())
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedStatistic("correlation undefined for a constant column")
    sxy = math.fsum((dx * dy).tolist())
    return SubsampleStatistic(sxy / math.sqrt(sxx * syy), Kind.CORRELATION)


class NormalEquations:
    """Running ``X'X`` and ``X'y`` for least squares with an intercept.

    Blocks of rows are added one at a time; :meth:`solve` factors the
    accumulated Gram matrix once.  Feeding the same rows in one block or
    in many gives the same coefficients up to rounding.
    """

    def __init__(self, p: int):
        self.p = p
        self.xtx = np.zeros((p + 1, p + 1))
        self.xty = np.zeros(p + 1)
        self.count = 0

    def add(self, X: np.ndarray, y: np.ndarray) -> "NormalEquations":
        X = np.asarray(X, dtype=float).reshape(len(y), self.p)
        Z = np.empty((X.shape[0], self.p + 1))
        Z[:, 0] = 1.0
        Z[:, 1:] = X
        self.xtx += Z.T @ Z
        self.xty += Z.T @ np.asarray(y, dtype=float)
        self.count += X.shape[0]
        return self

    def solve(self, rcond: float = 1e-12) -> np.ndarray:
        if self.count <= self.p + 1:
            raise RankDeficient(f"{self.count} rows cannot identify {self.p + 1} coefficients")
        try:
            factor = linalg.cho_factor(self.xtx, lower=False, check_finite=True)
        except linalg.LinAlgError:
            raise RankDeficient("design matrix is rank deficient") from None
        diag = np.diag(factor[0]) ** 2
        if diag.min() <= rcond * diag.max():
            raise RankDeficient("design matrix is numerically rank deficient")
        return linalg.cho_solve(factor, self.xty)


def split_response(data, response_col: int = -1):
    a = np.asarray(data, dtype=float)
    if a.ndim != 2 or a.shape[1] < 2:
        raise ValueError("regression rows need at least one covariate and a response")
    rc = response_col % a.shape[1]
    X = np.delete(a, rc, axis=1)
    return X, a[:, rc]


def ols_fit(data, response_col: int = -1) -> SubsampleStatistic:
    """Least-squares coefficients, intercept first.

    ``data`` rows hold covariates and the response; ``response_col`` says
    where the response is (last column by default).
    """
    X, y = split_response(data, response_col)
    beta = NormalEquations(X.shape[1]).add(X, y).solve()
    return SubsampleStatistic(beta, Kind.OLS)


_STATISTICS = {
    Kind.MEAN: subsample_mean,
    Kind.SIN_MEAN: sin_mean_statistic,
    Kind.CV: cv_statistic,
    Kind.CORRELATION: correlation_statistic,
    Kind.OLS: ols_fit,
}


def compute_statistic(kind, data, **kwargs) -> SubsampleStatistic:
    return _STATISTICS[Kind(kind)](data, **kwargs)


# -- combination and inference ---------------------------------------------

def combined_mean(means: Sequence) -> float:
    vals = _as_values(means)
    if vals.size == 0:
        raise ValueError("no subsample means to combine")
    return math.fsum(vals.tolist()) / vals.size


def scaler_c(n: int, B: int, N: int) -> float:
    if n <= 0 or B <= 0 or N <= 0:
        raise ValueError("n, B and N must be positive")
    if n > N:
        raise ValueError(f"subsample size n={n} exceeds N={N}")
    return float(Fraction(n) * (Fraction(1, n * B) + Fraction(1, N)))


def aggregate_statistic(stats: Sequence[SubsampleStatistic]) -> Value:
    """Average of the subsample statistics (componentwise for vectors)."""
    if len(stats) == 0:
        raise ValueError("no statistics to aggregate")
    kinds = {s.kind for s in stats if isinstance(s, SubsampleStatistic)}
    if len(kinds) > 1:
        raise ValueError(f"mixed statistic kinds: {sorted(k.value for k in kinds)}")
    vals = _as_values(stats)
    total = _column_fsum(vals) / vals.shape[0]
    return float(total) if total.ndim == 0 else total


def se2_combined(stats: Sequence, c: float) -> Value:
    """``c / (B - 1)`` times the spread of the statistics about their mean."""
    vals = _as_values(stats)
    B = vals.shape[0] if vals.ndim else 0
    if B < 2:
        raise ValueError("SE^2 needs at least B = 2 subsample statistics")
    centre = _column_fsum(vals) / B
    dev = vals - centre
    out = c / (B - 1) * _column_fsum(dev * dev)
    return float(out) if out.ndim == 0 else out


def plugin_estimate(mean: float, g: Callable[[float], float] = lambda x: x) -> float:
    """``g`` applied to the combined mean.  No standard error is attached."""
    try:
        value = g(mean)
    except (ZeroDivisionError, ValueError) as exc:
        raise UndefinedStatistic(f"transform undefined at {mean!r}") from exc
    if isinstance(value, float) and not math.isfinite(value):
        raise UndefinedStatistic(f"transform not finite at {mean!r}")
    return value


def combine(stats: Sequence, n: int, N: int) -> CombinedEstimate:
    """Aggregate estimate plus its squared standard error.

    ``stats`` may contain ``None`` for subsamples whose statistic was
    undefined; they are dropped and counted in ``excluded``.  ``c`` uses
    the number of subsamples actually kept.
    """
    kept = [s for s in stats if s is not None]
    excluded = len(stats) - len(kept)
    B = len(kept)
    c = scaler_c(n, B, N)
    return CombinedEstimate(aggregate_statistic(kept), se2_combined(kept, c),
                            n=n, B=B, N=N, c=c, excluded=excluded)


# -- theory ------------------------------------------------------------------

def _lemma1_fraction(N: int, n: int) -> Fraction:
    K = N - n + 1
    return (K + Fraction((n - 1) * (3 * N - 4 * n + 2), 3)) / (n * K * K)


def lemma1_variance(N: int, n: int, sigma2: float = 1.0) -> float:
    """Exact variance of the average over all ``K = N - n + 1`` window means.

    The closed form counts overlapping window pairs assuming ``K >= n - 1``.
    The variance only depends on how many windows cover each point, and
    those counts are unchanged when ``n`` is replaced by ``K``, so for
    longer windows the formula is evaluated at ``N - n + 1`` instead.
    """
    if not 1 <= n <= N:
        raise ValueError(f"need 1 <= n <= N, got n={n}, N={N}")
    if N - n + 1 < n - 1:
        n = N - n + 1
    return float(_lemma1_fraction(N, n) * Fraction(sigma2))


def theoretical_var_star(kind, moments: PopulationMoments, n: int, B: int, N: int) -> float:
    kind = Kind(kind)
    base = moments.sigma2 * (1.0 / (n * B) + 1.0 / N)
    if kind is Kind.MEAN:
        return base
    if kind is Kind.SIN_MEAN:
        gdot2 = moments.gdot2 if moments.gdot2 is not None else math.cos(moments.mu) ** 2
        return gdot2 * base
    raise NoClosedForm(f"no closed-form Var* for {kind.value}")
