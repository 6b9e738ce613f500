"""Monte Carlo replication of the simulation protocol.

For each replication ``r`` a fresh dataset is generated, shuffled (SAS
mode only), subsampled ``B`` times, and reduced to a combined estimate and
its squared standard error.  All randomness for replication ``r`` comes
from streams keyed ``(r, role)`` under the master seed, so a report is a
pure function of the configuration regardless of ``jobs``.
"""

from __future__ import annotations

import csv
import math
import shutil
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .. import rng as rngmod
from ..estimators import (
    Kind,
    UndefinedStatistic,
    combine,
    combined_mean,
    compute_statistic,
    subsample_mean,
)
from ..line_store import open_store
from ..sampler import Mode, SubsamplePlan, addressing_total, draw_batch
from ..shuffler import ShuffleConfig, shuffle
from .populations import EXAMPLES, PopulationSpec, generate_dataset


@dataclass
class ExperimentConfig:
    example: int
    N: int
    n: int
    B: int
    R: int = 200
    mode: str = "sas"
    seed: int = 0
    wrap: bool = True
    fixed_data: bool = False
    cache_mode: str = "warm"
    jobs: int = 1
    workdir: Optional[str] = None
    keep_files: bool = False

    def __post_init__(self):
        self.mode = Mode(self.mode).value
        if self.example not in EXAMPLES:
            raise ValueError(f"unknown example {self.example}")
        if self.B < 2:
            raise ValueError("B must be >= 2")
        if not 1 <= self.n <= self.N:
            raise ValueError("need 1 <= n <= N")
        if self.R < 1:
            raise ValueError("R must be >= 1")

    @property
    def expected_addressing_ops(self) -> int:
        return self.B if self.mode == Mode.SAS.value else self.B * self.n


@dataclass
class ReplicationResult:
    estimate: object
    se2: object
    plugin: Optional[float]
    hdsc: float
    addressing_ops: int
    excluded: int
    starts: List[int] = field(default_factory=list)


def _statistic(kind: Kind, data: np.ndarray, response_col: int):
    try:
        if kind is Kind.OLS:
            return compute_statistic(kind, data, response_col=response_col)
        return compute_statistic(kind, data)
    except UndefinedStatistic:
        return None


def _prepare_store(cfg: ExperimentConfig, r: int, workdir: Path):
    ex = EXAMPLES[cfg.example]
    data_key = 0 if cfg.fixed_data else r
    raw = workdir / f"data_{data_key}.csv"
    spec = PopulationSpec(ex.population, rngmod.sub_seed(cfg.seed, data_key, rngmod.DATA))
    generate_dataset(spec, cfg.N, raw).close()
    if cfg.mode != Mode.SAS.value:
        return raw
    shuffled = workdir / f"shuffled_{data_key}.csv"
    conf = ShuffleConfig(seed=rngmod.sub_seed(cfg.seed, data_key, rngmod.SHUFFLE_ASSIGN),
                         temp_dir=workdir / f"tmp_{data_key}")
    shuffle(raw, conf, shuffled).close()
    if not cfg.keep_files:
        raw.unlink()
    return shuffled


def run_replication(cfg: ExperimentConfig, r: int, workdir: Path, store_path=None) -> ReplicationResult:
    ex = EXAMPLES[cfg.example]
    own_store = store_path is None
    if own_store:
        store_path = _prepare_store(cfg, r, workdir)
    plan = SubsamplePlan(cfg.n, cfg.B, cfg.mode, wrap=cfg.wrap)
    with open_store(store_path) as fh:
        subs, timing = draw_batch(fh, plan, rngmod.stream(cfg.seed, r, rngmod.SAMPLE))
    stats, means = [], []
    for s in subs:
        data = s.values()
        stats.append(_statistic(ex.kind, data, ex.response_col))
        if ex.kind in (Kind.MEAN, Kind.SIN_MEAN):
            means.append(subsample_mean(data))
    est = combine(stats, cfg.n, cfg.N)
    plugin = None
    if means:
        m = combined_mean(means)
        plugin = math.sin(m) if ex.kind is Kind.SIN_MEAN else m
    if own_store and not cfg.keep_files:
        Path(store_path).unlink()
    return ReplicationResult(est.point, est.se2, plugin, timing.hdsc, addressing_total(subs),
                             est.excluded, [s.start_offset for s in subs])


def _worker(args):
    cfg, r, workdir, store = args
    return run_replication(cfg, r, Path(workdir), store)


@dataclass
class MetricsReport:
    config: ExperimentConfig
    truth: object
    var_star: Optional[float]
    estimates: np.ndarray
    se2s: np.ndarray
    plugins: Optional[np.ndarray]
    hdsc: np.ndarray
    addressing_ops: np.ndarray
    excluded: np.ndarray
    status: str = "ok"

    @property
    def R(self) -> int:
        return len(self.estimates)

    @property
    def mse(self):
        return np.mean((self.estimates - self.truth) ** 2, axis=0)

    @property
    def var(self):
        if self.R < 2:
            return None
        return np.var(self.estimates, axis=0, ddof=1)

    @property
    def se2(self):
        return np.mean(self.se2s, axis=0)

    @property
    def ratio_var_varstar(self):
        if self.var_star is None or self.var is None:
            return None
        return self.var / self.var_star

    @property
    def ratio_se2_varstar(self):
        if self.var_star is None:
            return None
        return self.se2s / self.var_star

    @property
    def ratio_se2_varstar_mean(self):
        r = self.ratio_se2_varstar
        return None if r is None else float(np.mean(r))

    @property
    def ratio_se2_varstar_sd(self):
        r = self.ratio_se2_varstar
        if r is None or len(r) < 2:
            return None
        return float(np.std(r, ddof=1))

    @property
    def ratio_se2_var(self):
        if self.var is None:
            return None
        return self.se2 / self.var

    @property
    def plugin_mse(self):
        if self.plugins is None:
            return None
        return float(np.mean((self.plugins - self.truth) ** 2))

    def as_row(self) -> dict:
        cfg = self.config
        row = {
            "example": cfg.example, "statistic": EXAMPLES[cfg.example].kind.value,
            "N": cfg.N, "n": cfg.n, "B": cfg.B, "R": self.R, "mode": cfg.mode,
            "wrap": int(cfg.wrap), "fixed_data": int(cfg.fixed_data), "seed": cfg.seed,
            "cache_mode": cfg.cache_mode, "status": self.status,
        }
        metrics = {
            "mse": self.mse, "var": self.var, "se2": self.se2,
            "se2_over_var": self.ratio_se2_var,
        }
        if self.var_star is not None:
            metrics.update({
                "var_star": self.var_star,
                "var_over_varstar": self.ratio_var_varstar,
                "se2_over_varstar_mean": self.ratio_se2_varstar_mean,
                "se2_over_varstar_sd": self.ratio_se2_varstar_sd,
            })
        for k, v in metrics.items():
            if v is None:
                row[k] = ""
            elif np.ndim(v) == 0:
                row[k] = repr(float(v))
            else:
                for j, vj in enumerate(np.ravel(v)):
                    row[f"{k}_b{j}"] = repr(float(vj))
        row["plugin_mse"] = "" if self.plugin_mse is None else repr(self.plugin_mse)
        row["hdsc_mean"] = repr(float(np.mean(self.hdsc))) if len(self.hdsc) else ""
        row["addressing_ops_per_batch"] = int(self.addressing_ops[0]) if len(self.addressing_ops) else ""
        row["excluded_total"] = int(np.sum(self.excluded))
        return row


def _report(cfg: ExperimentConfig, results: List[ReplicationResult], status="ok") -> MetricsReport:
    ex = EXAMPLES[cfg.example]
    plugins = None
    if results and results[0].plugin is not None:
        plugins = np.array([r.plugin for r in results])
    return MetricsReport(
        config=cfg,
        truth=ex.truth,
        var_star=ex.var_star(cfg.n, cfg.B, cfg.N),
        estimates=np.array([r.estimate for r in results], dtype=float),
        se2s=np.array([r.se2 for r in results], dtype=float),
        plugins=plugins,
        hdsc=np.array([r.hdsc for r in results]),
        addressing_ops=np.array([r.addressing_ops for r in results], dtype=np.int64),
        excluded=np.array([r.excluded for r in results], dtype=np.int64),
        status=status,
    )


def run_experiment(cfg: ExperimentConfig, out=None) -> MetricsReport:
    """Run ``cfg.R`` replications and summarise them.

    On failure the replications finished so far are written to ``out``
    (when given) with a ``failed`` status before the error propagates.
    """
    base = Path(cfg.workdir) if cfg.workdir else None
    if base is not None:
        base.mkdir(parents=True, exist_ok=True)
    workdir = Path(tempfile.mkdtemp(prefix="seqsample-exp-", dir=base))
    results: List[ReplicationResult] = []
    try:
        fixed = _prepare_store(cfg, 0, workdir) if cfg.fixed_data else None
        jobs = [(cfg, r, str(workdir), fixed) for r in range(cfg.R)]
        if cfg.jobs > 1:
            with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
                for res in pool.map(_worker, jobs):
                    results.append(res)
        else:
            for job in jobs:
                results.append(_worker(job))
    except BaseException as exc:
        if out is not None and results:
            write_metrics_csv([_report(cfg, results, status=f"failed: {exc!r}")], out)
        raise
    finally:
        if not cfg.keep_files:
            shutil.rmtree(workdir, ignore_errors=True)
    report = _report(cfg, results)
    if out is not None:
        write_metrics_csv([report], out)
    return report


def write_metrics_csv(reports: List[MetricsReport], path) -> Path:
    rows = [r.as_row() for r in reports]
    fields: List[str] = []
    for row in rows:
        for k in row:
            if k not in fields:
                fields.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, restval="")
        w.writeheader()
        w.writerows(rows)
    return Path(path)


def config_dict(cfg: ExperimentConfig) -> dict:
    return asdict(cfg)
