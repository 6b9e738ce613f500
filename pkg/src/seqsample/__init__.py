"""Subsampling massive line-oriented datasets straight from disk.

Sequential addressing (one random seek per subsample on a shuffled
store) and random addressing (one seek per record), the combined
estimators built on the subsamples, and their automatic standard errors.
"""

from .estimators import (
    CombinedEstimate,
    Kind,
    PopulationMoments,
    SubsampleStatistic,
    aggregate_statistic,
    combine,
    combined_mean,
    compute_statistic,
    lemma1_variance,
    ols_fit,
    plugin_estimate,
    scaler_c,
    se2_combined,
    theoretical_var_star,
)
from .line_store import ByteAddressedFile, Record, open_store, sequential_scan
from .sampler import Mode, Subsample, SubsamplePlan, TimingBreakdown, draw_batch
from .shuffler import ShuffleConfig, shuffle

__version__ = "0.1.0"
