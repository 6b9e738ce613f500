# coding: utf-8

# # Shuffling a store and timing the two samplers
#
# Sequential subsamples are only random if the store is in random order.
# The external shuffle spreads line offsets over b cache files, visits
# the caches in random order and shuffles each one in memory, so at most
# one cache of 8-byte offsets is resident.

# In[1]:

import tempfile
from pathlib import Path

from seqsample.harness.bench import bench_hdsc, table4_layout
from seqsample.harness.populations import Normal, PopulationSpec, generate_dataset
from seqsample.shuffler import ShuffleConfig, ShuffleStats, shuffle

work = Path(tempfile.mkdtemp(prefix="demo-bench-"))
generate_dataset(PopulationSpec(Normal(), seed=1), 1_000_000, work / "data.csv").close()

st = ShuffleStats()
shuffle(work / "data.csv", ShuffleConfig(seed=2, memory_budget=1 << 20), work / "shuffled.csv", st).close()
print(f"{st.n_records} lines, b={st.b} caches, largest cache {st.peak_index_entries} offsets "
      f"({st.peak_index_bytes} bytes)")


# Hard-drive sampling cost per batch. Numbers depend on the machine and
# on whether the file sits in the page cache; the ratio is the point.

# In[2]:

rows = bench_hdsc(work / "shuffled.csv", [(1000, 10), (1000, 50), (10_000, 50)], ("sas", "ras"), repetitions=3)
print(f"{'n':>6} {'B':>4} {'SAS s':>8} {'RAS s':>8} {'RAS/SAS':>8}")
for cell in table4_layout(rows):
    print(f"{cell['n']:6d} {cell['B']:4d} {cell['hdsc_sas']:8.4f} {cell['hdsc_ras']:8.4f} {cell['ras_over_sas']:8.1f}")
