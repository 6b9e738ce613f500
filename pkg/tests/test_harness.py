import csv
import math
from pathlib import Path

import numpy as np
import pytest

from seqsample import rng as rngmod
from seqsample.estimators import ols_fit
from seqsample.harness import bench as benchmod
from seqsample.harness.experiment import ExperimentConfig, run_experiment, write_metrics_csv
from seqsample.harness.flights import (
    AFTERNOON,
    EVENING,
    MIDNIGHT,
    MORNING,
    STORE_COLUMNS,
    departure_bin,
    encode_row,
    preprocess_flights,
)
from seqsample.harness.populations import (
    EXAMPLES,
    BivariateNormal,
    FlightsSynthetic,
    Normal,
    PopulationSpec,
    RegressionDesign,
    generate_dataset,
    parse_spec,
    read_sidecar,
)
from seqsample.harness.streaming import chunked_ols, exact_all_windows_mean
from seqsample.line_store import open_store

from oracles import reference_headers, reference_lines, reference_ols, reference_realign


def load(path):
    return np.loadtxt(path, delimiter=",", ndmin=2)


# -- data generation --------------------------------------------------------------------

def test_generate_normal_deterministic(tmp_path):
    spec = PopulationSpec(Normal(0, 1), seed=5)
    generate_dataset(spec, 5, tmp_path / "a.csv").close()
    generate_dataset(spec, 5, tmp_path / "b.csv").close()
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes()
    lines = reference_lines(a)
    assert len(lines) == 5 and all(len(l) == 11 for l in lines)
    meta = read_sidecar(tmp_path / "a.csv")
    assert meta["n_records"] == "5" and meta["columns"] == "x" and meta["seed"] == "5"


def test_generate_matches_independent_draws(tmp_path):
    generate_dataset(PopulationSpec(Normal(1.0, 4.0), seed=3), 1000, tmp_path / "a.csv").close()
    rng = np.random.default_rng(np.random.SeedSequence(3, spawn_key=(rngmod.DATA,)))
    expected = 1.0 + 2.0 * rng.standard_normal(1000)
    np.testing.assert_allclose(load(tmp_path / "a.csv")[:, 0], expected, atol=5e-7)


def test_generate_chunk_boundary_continuity(tmp_path):
    # more rows than one generation chunk: the stream must not restart
    generate_dataset(PopulationSpec(Normal(), seed=1), 70_000, tmp_path / "a.csv").close()
    generate_dataset(PopulationSpec(Normal(), seed=1), 65_536, tmp_path / "b.csv").close()
    a = (tmp_path / "a.csv").read_bytes()
    b = (tmp_path / "b.csv").read_bytes()
    assert a.startswith(b)
    assert len(set(reference_lines(a))) > 69_000


def test_bivariate_correlation(tmp_path):
    generate_dataset(PopulationSpec(BivariateNormal(), seed=2), 100_000, tmp_path / "xy.csv").close()
    xy = load(tmp_path / "xy.csv")
    assert abs(np.corrcoef(xy.T)[0, 1] - 0.5) < 0.02


def test_regression_design_recovers_beta(tmp_path):
    generate_dataset(PopulationSpec(RegressionDesign(), seed=4), 10_000, tmp_path / "r.csv").close()
    data = load(tmp_path / "r.csv")
    beta = ols_fit(data).value
    Z = np.column_stack([np.ones(len(data)), data[:, :3]])
    se = np.sqrt(np.diag(np.linalg.inv(Z.T @ Z)))
    assert np.all(np.abs(beta - [3, 1.5, 0, -0.5]) < 4 * se)
    assert read_sidecar(tmp_path / "r.csv")["response_col"] == "3"


def test_regression_covariance_positive_definite():
    cov = RegressionDesign().covariance()
    np.testing.assert_array_equal(np.diag(cov), 1.0)
    assert cov[0, 2] == 0.25
    assert np.all(np.linalg.eigvalsh(cov) > 0)


def test_parse_spec():
    assert parse_spec("normal:1,2").kind == Normal(1.0, 2.0)
    assert parse_spec("bivariate").kind == BivariateNormal()
    assert parse_spec("regression:0.3").kind.cov_decay == 0.3
    assert isinstance(parse_spec("flights").kind, FlightsSynthetic)
    for bad in ("poisson:1", "normal:1,2,3,4", "flights:1"):
        with pytest.raises(ValueError):
            parse_spec(bad)


def test_generate_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        generate_dataset(PopulationSpec(Normal()), 0, tmp_path / "x.csv")


def test_example_truths():
    assert EXAMPLES[1].truth == 0.0
    assert EXAMPLES[2].truth == math.sin(1.0)
    assert EXAMPLES[3].truth == 1.0
    assert EXAMPLES[4].truth == 0.5
    np.testing.assert_array_equal(EXAMPLES[5].truth, [3, 1.5, 0, -0.5])
    assert EXAMPLES[1].var_star(100, 100, 10**4) == pytest.approx(2e-4)
    assert EXAMPLES[3].var_star(100, 100, 10**4) is None


# -- all-windows mean ------------------------------------------------------------------------

def test_all_windows_examples(tmp_path):
    assert exact_all_windows_mean([7.0] * 20, 6) == 7.0
    seen = []
    assert exact_all_windows_mean([1, 2, 3, 4], 2, seen.append) == 2.5
    assert seen == [1.5, 2.5, 3.5]
    with pytest.raises(ValueError):
        exact_all_windows_mean([1, 2], 3)


def test_all_windows_on_store_matches_brute_force(tmp_path):
    generate_dataset(PopulationSpec(Normal(), seed=8), 500, tmp_path / "a.csv").close()
    x = load(tmp_path / "a.csv")[:, 0]
    n = 37
    brute = np.mean([x[k:k + n].mean() for k in range(len(x) - n + 1)])
    assert exact_all_windows_mean(tmp_path / "a.csv", n) == pytest.approx(brute, rel=1e-12, abs=1e-15)
    with open_store(tmp_path / "a.csv") as fh:
        assert exact_all_windows_mean(fh, n) == pytest.approx(brute, rel=1e-12, abs=1e-15)


# -- chunked OLS ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def regression_store(tmp_path_factory):
    path = tmp_path_factory.mktemp("ols") / "r.csv"
    generate_dataset(PopulationSpec(RegressionDesign(), seed=6), 20_000, path).close()
    return path


def test_chunked_ols_single_block_identity(regression_store):
    data = load(regression_store)
    whole = chunked_ols(regression_store, block_size=10**6)
    np.testing.assert_array_equal(whole, ols_fit(data).value)


def test_chunked_ols_block_size_invariance(regression_store):
    fits = [chunked_ols(regression_store, block_size=b) for b in (100, 999, 10_000)]
    for f in fits[1:]:
        np.testing.assert_allclose(f, fits[0], rtol=0, atol=1e-10)
    np.testing.assert_allclose(fits[0], reference_ols(load(regression_store)), atol=1e-10)


def test_chunked_ols_response_from_sidecar(tmp_path):
    rng = np.random.default_rng(1)
    X = rng.standard_normal((300, 2))
    y = 2 + X @ [1.0, -3.0]
    path = tmp_path / "first.csv"
    path.write_text("".join("%.12f,%.12f,%.12f\n" % (a, b, c) for a, b, c in zip(y, *X.T)))
    (tmp_path / "first.csv.meta").write_text("response_col=0\n")
    np.testing.assert_allclose(chunked_ols(path, block_size=64), [2, 1, -3], atol=1e-9)


# -- flights -----------------------------------------------------------------------------------

def test_departure_bins():
    assert departure_bin(700) == MORNING and departure_bin(1159) == MORNING
    assert departure_bin(1200) == AFTERNOON and departure_bin(1759) == AFTERNOON
    assert departure_bin(1800) == EVENING and departure_bin(2359) == EVENING
    assert departure_bin(0) == MIDNIGHT and departure_bin(2400) == MIDNIGHT and departure_bin(659) == MIDNIGHT
    for bad in (2401, 1260, -5):
        with pytest.raises(ValueError):
            departure_bin(bad)


def test_encode_row_example():
    assert encode_row(math.exp(2), 1330, 1) == "+002.000000,1,0,0,0,0,0,0,0,0"
    assert encode_row(1.0, 300, 7).endswith(",0,0,1,0,0,0,0,0,1")


def test_preprocess_filters_and_counts(tmp_path):
    raw = tmp_path / "raw.csv"
    raw.write_text(
        "Year,DayOfWeek,DepTime,ArrDelay\n"
        "2008,1,1330,7.38905609893065\n"
        "2008,2,800,-5\n"
        "2008,3,900,0\n"
        "2008,4,1000,NA\n"
        "2008,5,bogus,12\n"
        "2008,6,2100,1\n"
    )
    res = preprocess_flights(raw, tmp_path / "f.csv")
    res.store.close()
    assert (res.kept, res.dropped_nonpositive, res.dropped_missing, res.unparseable) == (2, 2, 1, 1)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines == ["+002.000000,1,0,0,0,0,0,0,0,0", "+000.000000,0,1,0,0,0,0,0,1,0"]
    meta = read_sidecar(tmp_path / "f.csv")
    assert meta["columns"] == ",".join(STORE_COLUMNS)
    assert meta["response_col"] == "0" and meta["n_records"] == "2"


def test_preprocess_missing_column(tmp_path):
    raw = tmp_path / "raw.csv"
    raw.write_text("DayOfWeek,ArrDelay\n1,3\n")
    with pytest.raises(ValueError, match="DepTime"):
        preprocess_flights(raw, tmp_path / "f.csv")


def test_synthetic_flights_roundtrip(tmp_path):
    pop = FlightsSynthetic()
    generate_dataset(PopulationSpec(pop, seed=3), 60_000, tmp_path / "raw.csv")
    res = preprocess_flights(tmp_path / "raw.csv", tmp_path / "f.csv")
    res.store.close()
    assert res.kept + res.dropped_nonpositive + res.dropped_missing + res.unparseable == 60_000
    assert abs(res.dropped_nonpositive / 60_000 - pop.p_nonpositive) < 0.01
    beta = chunked_ols(tmp_path / "f.csv", block_size=5000)
    assert np.all(np.abs(beta - pop.truth("ols")) < 0.1)


# -- experiments ----------------------------------------------------------------------------

def replay_replication(store: Path, seed, r, n, B, mode, N):
    """Independent in-memory rerun of one replication's sampling and estimate."""
    data = store.read_bytes()
    lines = reference_lines(data)
    heads = reference_headers(data)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r, rngmod.SAMPLE)))
    means = []
    for _ in range(B):
        if mode == "sas":
            k = heads.index(reference_realign(data, int(rng.integers(0, len(data), endpoint=True))))
            window = [lines[(k + j) % len(lines)] for j in range(n)]
        else:
            window = [lines[heads.index(reference_realign(data, int(rng.integers(0, len(data), endpoint=True))))]
                      for _ in range(n)]
        means.append(math.fsum(float(v) for v in window) / n)
    est = math.fsum(means) / B
    c = n * (1 / (n * B) + 1 / N)
    se2 = c / (B - 1) * math.fsum((m - est) ** 2 for m in means)
    return est, se2


@pytest.mark.parametrize("mode", ["sas", "ras"])
def test_oracle_chain(tmp_path, mode):
    N, n, B, R, seed = 150, 12, 6, 3, 21
    cfg = ExperimentConfig(1, N, n, B, R=R, mode=mode, seed=seed, workdir=str(tmp_path), keep_files=True)
    report = run_experiment(cfg)
    (work,) = list(tmp_path.glob("seqsample-exp-*"))
    for r in range(R):
        raw = work / f"data_{r}.csv"
        data_rng = np.random.default_rng(np.random.SeedSequence(rngmod.sub_seed(seed, r, rngmod.DATA),
                                                                spawn_key=(rngmod.DATA,)))
        expected = "".join("%+011.6f\n" % v for v in data_rng.standard_normal(N)).encode()
        assert raw.read_bytes() == expected
        store = work / (f"shuffled_{r}.csv" if mode == "sas" else f"data_{r}.csv")
        if mode == "sas":
            assert sorted(reference_lines(store.read_bytes())) == sorted(reference_lines(expected))
        est, se2 = replay_replication(store, seed, r, n, B, mode, N)
        assert report.estimates[r] == est
        assert report.se2s[r] == pytest.approx(se2, rel=1e-14)
    assert report.addressing_ops.tolist() == [cfg.expected_addressing_ops] * R


def test_single_replication_has_no_variance(tmp_path):
    rep = run_experiment(ExperimentConfig(1, 200, 10, 4, R=1, seed=1))
    assert rep.var is None and rep.ratio_var_varstar is None
    assert rep.mse == pytest.approx((rep.estimates[0] - 0.0) ** 2)
    row = rep.as_row()
    assert row["var"] == "" and row["status"] == "ok"


def test_report_is_independent_of_jobs():
    cfg = dict(example=2, N=300, n=20, B=5, R=4, seed=3)
    a = run_experiment(ExperimentConfig(**cfg, jobs=1))
    b = run_experiment(ExperimentConfig(**cfg, jobs=2))
    np.testing.assert_array_equal(a.estimates, b.estimates)
    np.testing.assert_array_equal(a.se2s, b.se2s)
    np.testing.assert_array_equal(a.plugins, b.plugins)


def test_fixed_data_reuses_one_dataset():
    rep = run_experiment(ExperimentConfig(1, 400, 400, 3, R=3, seed=2, fixed_data=True))
    # n = N windows cover the whole store, so every replication sees the same mean
    assert np.ptp(rep.estimates) < 1e-12


def test_metrics_csv_ratios_recompute(tmp_path):
    rep = run_experiment(ExperimentConfig(1, 500, 20, 5, R=5, seed=4))
    out = write_metrics_csv([rep], tmp_path / "m.csv")
    (row,) = list(csv.DictReader(open(out)))
    assert float(row["var"]) / float(row["var_star"]) == float(row["var_over_varstar"])
    assert float(row["se2"]) / float(row["var"]) == float(row["se2_over_var"])
    assert float(row["mse"]) >= 0
    assert row["addressing_ops_per_batch"] == "5" and row["cache_mode"] == "warm"


def test_regression_report_has_coefficient_columns():
    rep = run_experiment(ExperimentConfig(5, 400, 100, 3, R=2, seed=1))
    row = rep.as_row()
    for j in range(4):
        assert f"mse_b{j}" in row and f"se2_over_var_b{j}" in row
    assert "var_star" not in row


def test_failure_writes_partial_report(tmp_path, monkeypatch):
    from seqsample.harness import experiment

    real = experiment.run_replication
    calls = []

    def flaky(cfg, r, workdir, store_path=None):
        calls.append(r)
        if r == 2:
            raise OSError("disk gone")
        return real(cfg, r, workdir, store_path)

    monkeypatch.setattr(experiment, "run_replication", flaky)
    out = tmp_path / "m.csv"
    with pytest.raises(OSError):
        run_experiment(ExperimentConfig(1, 200, 10, 3, R=4, seed=1), out=out)
    (row,) = list(csv.DictReader(open(out)))
    assert row["status"].startswith("failed") and row["R"] == "2"


def test_config_validation():
    for bad in (dict(B=1), dict(n=0), dict(n=1000), dict(R=0), dict(example=9), dict(mode="xyz")):
        kw = dict(example=1, N=100, n=10, B=2)
        kw.update(bad)
        with pytest.raises(ValueError):
            ExperimentConfig(**kw)


# -- bench ---------------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def bench_store(tmp_path_factory):
    path = tmp_path_factory.mktemp("bench") / "s.csv"
    generate_dataset(PopulationSpec(Normal(), seed=0), 20_000, path).close()
    return path


def test_bench_addressing_counts_and_annotation(bench_store):
    rows = benchmod.bench_hdsc(bench_store, [(100, 10)], ("sas", "ras"), repetitions=2, truth=0.0)
    assert [(r.mode, r.addressing_ops, r.cache_mode) for r in rows] == [("sas", 10, "warm"), ("ras", 1000, "warm")]
    for r in rows:
        assert r.hdsc_mean > 0 and not r.error
        assert r.hdsc_mean == pytest.approx(r.addressing_cost_mean + r.io_cost_mean)
        assert r.estimate_mse >= 0
    (cell,) = benchmod.table4_layout(rows)
    assert cell["ras_over_sas"] == pytest.approx(rows[1].hdsc_mean / rows[0].hdsc_mean)


def test_bench_cold_mode(bench_store, tmp_path):
    rows = benchmod.bench_hdsc(bench_store, [(50, 4)], ("sas",), repetitions=2, cache_mode="cold-best-effort")
    assert rows[0].cache_mode == "cold-best-effort" and not rows[0].error
    out = benchmod.write_bench_csv(rows, tmp_path / "b.csv")
    assert "cold-best-effort" in out.read_text()


def test_bench_rejects_small_store(bench_store):
    with pytest.raises(ValueError, match="fewer than"):
        benchmod.bench_hdsc(bench_store, [(1000, 100)], ("sas",))
    with pytest.raises(ValueError):
        benchmod.bench_hdsc(bench_store, [(10, 2)], ("sas",), cache_mode="hot")


def test_bench_sas_cost_grows_with_volume(bench_store):
    grid = [(100, 4), (1000, 4), (2000, 8)]
    rows = benchmod.bench_hdsc(bench_store, grid, ("sas",), repetitions=5)
    volume = np.array([n * B for n, B in grid], dtype=float)
    slope = np.polyfit(volume, [r.hdsc_mean for r in rows], 1)[0]
    assert slope > 0
