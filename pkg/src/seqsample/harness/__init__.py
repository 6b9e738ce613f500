"""Simulation protocol: data generation, experiments, benchmarks, airline-style regression."""

from .bench import BenchRow, bench_hdsc, table4_layout, write_bench_csv
from .experiment import ExperimentConfig, MetricsReport, run_experiment, write_metrics_csv
from .flights import PreprocessResult, generate_raw_flights, preprocess_flights
from .populations import (
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
from .streaming import chunked_ols, exact_all_windows_mean
