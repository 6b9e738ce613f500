# coding: utf-8

# # Regression on airline-style data
#
# Raw rows carry day of week, departure time (hhmm) and arrival delay.
# Preprocessing keeps positive delays, takes logs, and codes departure
# time (afternoon / evening / midnight against a morning base) and day
# of week (against Monday) as dummies. The full-data least squares fit
# is computed block by block; sequential subsamples then give the same
# coefficients with standard errors at a fraction of the reading cost.

# In[1]:

import tempfile
from pathlib import Path

import numpy as np

from seqsample.estimators import Kind, combine, compute_statistic
from seqsample.harness.flights import STORE_COLUMNS, preprocess_flights
from seqsample.harness.populations import FlightsSynthetic, PopulationSpec, generate_dataset
from seqsample.harness.streaming import chunked_ols
from seqsample.sampler import SubsamplePlan, draw_batch
from seqsample.shuffler import ShuffleConfig, shuffle

work = Path(tempfile.mkdtemp(prefix="demo-flights-"))
pop = FlightsSynthetic()
generate_dataset(PopulationSpec(pop, seed=5), 400_000, work / "raw.csv")
res = preprocess_flights(work / "raw.csv", work / "flights.csv")
res.store.close()
print(f"kept {res.kept}, dropped {res.dropped_nonpositive} non-positive and {res.dropped_missing} missing")


# In[2]:

beta_ols = chunked_ols(work / "flights.csv", block_size=100_000)

with shuffle(work / "flights.csv", ShuffleConfig(seed=6), work / "shuffled.csv") as fh:
    N = fh.n_records
    results = {}
    for mode in ("sas", "ras"):
        subs, timing = draw_batch(fh, SubsamplePlan(2000, 50, mode), np.random.default_rng(7))
        stats = [compute_statistic(Kind.OLS, s.values(), response_col=0) for s in subs]
        results[mode] = (combine(stats, 2000, N), timing.hdsc)


# In[3]:

names = ["intercept"] + list(STORE_COLUMNS[1:])
print(f"{'coef':>10} {'truth':>7} {'OLS':>7} {'SAS':>7} {'(SE)':>6} {'RAS':>7} {'(SE)':>6}")
sas, ras = results["sas"][0], results["ras"][0]
for j, name in enumerate(names):
    print(f"{name:>10} {pop.truth('ols')[j]:7.3f} {beta_ols[j]:7.3f} "
          f"{sas.point[j]:7.3f} {sas.se[j]:6.3f} {ras.point[j]:7.3f} {ras.se[j]:6.3f}")
print("sampling seconds: SAS %.3f  RAS %.3f" % (results["sas"][1], results["ras"][1]))
