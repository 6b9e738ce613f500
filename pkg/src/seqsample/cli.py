"""Command line entry point: ``seqsample <subcommand> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  Randomised
commands print the resolved master seed (flag, then ``$SEQSAMPLE_SEED``,
then fresh entropy) on standard error together with the rest of the
effective configuration, so any run can be repeated exactly.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import rng as rngmod
from .estimators import Kind, UndefinedStatistic, combine, combined_mean, compute_statistic, subsample_mean
from .harness import bench as benchmod
from .harness.experiment import ExperimentConfig, run_experiment, write_metrics_csv
from .harness.flights import preprocess_flights
from .harness.populations import generate_dataset, parse_spec, read_sidecar
from .harness.streaming import resolve_response_col
from .line_store import StoreError, open_store
from .sampler import SubsamplePlan, addressing_total, draw_batch
from .shuffler import DEFAULT_MEMORY_BUDGET, ShuffleConfig, ShuffleStats, shuffle

FORMATS_HELP = """\
file formats:
  store      one record per line, fields separated by a single ',',
             decimal numbers, every line (including the last) ends in
             one LF byte (0x0A); a CR before the LF is ignored.  No
             header row.  Generated floats use '%+011.6f'.
  sidecar    <store>.meta, one 'key=value' per line: columns,
             n_records, response_col, spec, seed, base categories.
  cache file cache_<i>.idx, little-endian unsigned 64-bit byte offsets
             of line headers, 8 bytes each.
"""


class UsageError(Exception):
    pass


def positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def parse_grid(text: str):
    cells = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        a, sep, b = part.partition(":")
        if not sep:
            raise argparse.ArgumentTypeError(f"grid cell {part!r} is not n:B")
        try:
            n, B = int(a), int(b)
        except ValueError:
            raise argparse.ArgumentTypeError(f"grid cell {part!r} is not n:B") from None
        if n < 1 or B < 2:
            raise argparse.ArgumentTypeError(f"grid cell {part!r} needs n >= 1 and B >= 2")
        cells.append((n, B))
    if not cells:
        raise argparse.ArgumentTypeError("empty grid")
    return cells


def _effective(cmd: str, **kw) -> None:
    items = " ".join(f"{k}={v}" for k, v in kw.items())
    print(f"seqsample {cmd}: effective config: {items}", file=sys.stderr)


def _require_file(path: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input file not found: {path}")
    return p


def _store_n(fh) -> int:
    meta = read_sidecar(fh.path) or {}
    if meta.get("n_records", "").isdigit():
        return int(meta["n_records"])
    return fh.n_records


# -- subcommands ---------------------------------------------------------------

def cmd_gen(args) -> int:
    seed = rngmod.resolve_seed(args.seed)
    _effective("gen", spec=args.spec, n_rows=args.n_rows, seed=seed, out=args.out)
    try:
        spec = parse_spec(args.spec, seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    res = generate_dataset(spec, args.n_rows, args.out)
    if hasattr(res, "close"):
        res.close()
    print(f"wrote {args.n_rows} rows to {args.out}")
    return 0


def cmd_preprocess(args) -> int:
    _require_file(args.input)
    _effective("preprocess", input=args.input, out=args.out)
    res = preprocess_flights(args.input, args.out)
    res.store.close()
    print(f"kept={res.kept} dropped_nonpositive={res.dropped_nonpositive} "
          f"dropped_missing={res.dropped_missing} unparseable={res.unparseable}")
    return 0


def cmd_shuffle(args) -> int:
    _require_file(args.input)
    seed = rngmod.resolve_seed(args.seed)
    _effective("shuffle", input=args.input, output=args.output, caches=args.caches or "auto",
               seed=seed, tmp=args.tmp or "auto", memory_budget=args.memory_budget,
               keep_tmp=int(args.keep_tmp))
    conf = ShuffleConfig(b=args.caches, temp_dir=args.tmp, seed=seed,
                         memory_budget=args.memory_budget, keep_tmp=args.keep_tmp)
    stats = ShuffleStats()
    try:
        shuffle(args.input, conf, args.output, stats).close()
    except ValueError as exc:
        if "budget" in str(exc):
            raise UsageError(str(exc)) from None
        raise
    print(f"shuffled {stats.n_records} lines into {args.output} using b={stats.b} caches "
          f"(peak index entries {stats.peak_index_entries})")
    return 0


def _plan_from(args, seed):
    return SubsamplePlan(args.n, args.b, args.mode, seed=seed, wrap=not args.no_wrap,
                         addressing=args.addressing)


def cmd_sample(args) -> int:
    _require_file(args.input)
    seed = rngmod.resolve_seed(args.seed)
    _effective("sample", input=args.input, mode=args.mode, n=args.n, b=args.b, seed=seed,
               wrap=int(not args.no_wrap), addressing=args.addressing, emit=args.emit or "-")
    with open_store(args.input) as fh:
        plan = _plan_from(args, seed)
        try:
            plan.check(_store_n(fh))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        subs, timing = draw_batch(fh, plan)
    if args.emit:
        with open(args.emit, "w", newline="") as out:
            out.write("subsample_id,offset,fields\n")
            for i, s in enumerate(subs):
                for raw, off in zip(s.lines, s.origins.tolist()):
                    out.write(f"{i},{off},{raw.decode()}\n")
    print(json.dumps({
        "mode": plan.mode.value, "n": plan.n, "B": plan.B,
        "addressing_ops": addressing_total(subs),
        "addressing_cost": timing.addressing_cost, "io_cost": timing.io_cost, "hdsc": timing.hdsc,
    }))
    return 0


_TRANSFORMS = {Kind.MEAN: lambda m: m, Kind.SIN_MEAN: math.sin}


def cmd_estimate(args) -> int:
    _require_file(args.input)
    seed = rngmod.resolve_seed(args.seed)
    kind = Kind(args.stat)
    _effective("estimate", input=args.input, stat=kind.value, mode=args.mode, n=args.n, b=args.b,
               seed=seed, wrap=int(not args.no_wrap))
    with open_store(args.input) as fh:
        N = _store_n(fh)
        plan = _plan_from(args, seed)
        try:
            plan.check(N)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        rc = resolve_response_col(fh, args.response_col)
        subs, timing = draw_batch(fh, plan)
    stats, means = [], []
    for s in subs:
        data = s.values()
        try:
            kw = {"response_col": rc} if kind is Kind.OLS else {}
            stats.append(compute_statistic(kind, data, **kw))
        except UndefinedStatistic:
            stats.append(None)
        if kind in _TRANSFORMS:
            means.append(subsample_mean(data))
    est = combine(stats, plan.n, N)
    result = {
        "statistic": kind.value, "N": N, "n": est.n, "B": est.B, "excluded": est.excluded,
        "c": est.c, "estimate": np.atleast_1d(est.point).tolist(),
        "se2": np.atleast_1d(est.se2).tolist(), "hdsc": timing.hdsc,
    }
    if means:
        result["plugin"] = _TRANSFORMS[kind](combined_mean(means))
    print(json.dumps(result))
    return 0


def cmd_bench(args) -> int:
    _require_file(args.input)
    seed = rngmod.resolve_seed(args.seed)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    _effective("bench", input=args.input, grid=args.grid_text, modes=",".join(modes), reps=args.reps,
               cache=args.cache, seed=seed, out=args.out or "-")
    try:
        rows = benchmod.bench_hdsc(args.input, args.grid, modes, args.reps, args.cache, seed)
    except (ValueError, StoreError) as exc:
        raise UsageError(str(exc)) from None
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        fields = list(benchmod.BenchRow.__dataclass_fields__)
        w = csv.DictWriter(out, fieldnames=fields)
        w.writeheader()
        for r in rows:
            w.writerow(r.__dict__)
    finally:
        if out is not sys.stdout:
            out.close()
    return 1 if any(r.error for r in rows) else 0


def cmd_simulate(args) -> int:
    seed = rngmod.resolve_seed(args.seed)
    modes = ["sas", "ras"] if args.mode == "both" else [args.mode]
    _effective("simulate", example=args.example, N=args.N, grid=args.grid_text, r=args.r,
               mode=args.mode, seed=seed, wrap=int(not args.no_wrap),
               fixed_data=int(args.fixed_data), jobs=args.jobs, out=args.out)
    reports = []
    try:
        for n, B in args.grid:
            if n > args.N:
                raise UsageError(f"grid cell {n}:{B} has n > N={args.N}")
            for mode in modes:
                cfg = ExperimentConfig(example=args.example, N=args.N, n=n, B=B, R=args.r, mode=mode,
                                       seed=seed, wrap=not args.no_wrap, fixed_data=args.fixed_data,
                                       jobs=args.jobs, workdir=args.workdir)
                reports.append(run_experiment(cfg))
                row = reports[-1].as_row()
                print(f"example={args.example} N={args.N} n={n} B={B} mode={mode} "
                      f"mse={row.get('mse', row.get('mse_b0'))} status={row['status']}",
                      file=sys.stderr)
    finally:
        if reports:
            write_metrics_csv(reports, args.out)
    return 0


# -- parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="seqsample",
        description="Subsample line-oriented stores from disk (SAS/RAS) with automatic inference.",
        epilog=FORMATS_HELP, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text, func):
        sp = sub.add_parser(name, help=help_text, description=help_text, epilog=FORMATS_HELP,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(func=func)
        return sp

    g = add("gen", "Generate a synthetic store (or raw flights CSV) plus sidecar.", cmd_gen)
    g.add_argument("--spec", required=True,
                   help="normal:MU,SIGMA2 | bivariate[:MX,MY,SX,SY,SXY] | regression[:DECAY] | flights")
    g.add_argument("--n-rows", type=positive_int, required=True, help="number of records N")
    g.add_argument("--seed", type=int, help="master seed (default $SEQSAMPLE_SEED, else random)")
    g.add_argument("--out", required=True, help="output path")

    pp = add("preprocess", "Turn a raw flights CSV into a regression store.", cmd_preprocess)
    pp.add_argument("--input", required=True)
    pp.add_argument("--out", required=True)

    s = add("shuffle", "Bounded-memory shuffle of a store through b index cache files.", cmd_shuffle)
    s.add_argument("--input", required=True, help="store F")
    s.add_argument("--output", required=True, help="shuffled store F*")
    s.add_argument("--caches", type=positive_int, help="cache file count b (default from memory budget)")
    s.add_argument("--seed", type=int)
    s.add_argument("--tmp", help="directory for cache_<i>.idx files (default: fresh temp dir)")
    s.add_argument("--keep-tmp", action="store_true", help="keep cache files after success")
    s.add_argument("--memory-budget", type=positive_int, default=DEFAULT_MEMORY_BUDGET,
                   help="bytes allowed for one resident cache (default 64 MiB)")

    def sampling_flags(sp):
        sp.add_argument("--input", required=True)
        sp.add_argument("--mode", choices=["sas", "ras"], default="sas")
        sp.add_argument("--n", type=positive_int, required=True, help="subsample size")
        sp.add_argument("--b", type=int, required=True, help="number of subsamples B (>= 2)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--no-wrap", action="store_true",
                        help="SAS: redraw starts whose window would wrap past EOF")
        sp.add_argument("--addressing", choices=["byte", "line"], default="byte",
                        help="byte: offsets uniform on {0..n_f} (default); line: uniform over lines")

    sm = add("sample", "Draw B subsamples and report addressing counts and HDSC.", cmd_sample)
    sampling_flags(sm)
    sm.add_argument("--emit", help="write subsample_id,offset,fields CSV here")

    e = add("estimate", "Combined estimate and its squared standard error.", cmd_estimate)
    sampling_flags(e)
    e.add_argument("--stat", choices=[k.value for k in Kind], default="mean")
    e.add_argument("--response-col", type=int, help="OLS response column (default from sidecar, else last)")

    b = add("bench", "HDSC benchmark over an (n,B) grid.", cmd_bench)
    b.add_argument("--input", required=True)
    b.add_argument("--grid", required=True, help="comma separated n:B cells")
    b.add_argument("--modes", default="sas,ras")
    b.add_argument("--reps", type=positive_int, default=5)
    b.add_argument("--cache", choices=list(benchmod.CACHE_MODES), default="warm")
    b.add_argument("--seed", type=int)
    b.add_argument("--out", help="CSV output (default stdout)")

    m = add("simulate", "Replicated simulation over an (n,B) grid; one CSV row per cell.", cmd_simulate)
    m.add_argument("--example", type=int, choices=[1, 2, 3, 4, 5], required=True)
    m.add_argument("--N", type=positive_int, required=True)
    m.add_argument("--grid", required=True, help="comma separated n:B cells")
    m.add_argument("--r", type=positive_int, default=200, help="replications R")
    m.add_argument("--mode", choices=["sas", "ras", "both"], default="sas")
    m.add_argument("--seed", type=int)
    m.add_argument("--no-wrap", action="store_true")
    m.add_argument("--fixed-data", action="store_true", help="reuse one dataset for all replications")
    m.add_argument("--jobs", type=positive_int, default=1)
    m.add_argument("--workdir", help="scratch directory for replication stores")
    m.add_argument("--out", required=True)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    if hasattr(args, "grid"):
        args.grid_text = args.grid
        try:
            args.grid = parse_grid(args.grid)
        except argparse.ArgumentTypeError as exc:
            parser.error(str(exc))
    if getattr(args, "b", None) is not None and args.b < 2:
        parser.error("--b must be >= 2")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"seqsample {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"seqsample {args.command}: failed: {exc}", file=sys.stderr)
        return 1
