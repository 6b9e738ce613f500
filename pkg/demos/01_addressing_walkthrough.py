# coding: utf-8

# # Random and sequential addressing on a line store
#
# A store is a text file with one record per line. Both samplers address
# it by byte offset, the way a disk head would: pick an offset, skip to
# the start of the next line, read.

# In[1]:

import tempfile
from pathlib import Path

import numpy as np

from seqsample.line_store import advance_to_next_header, open_store, read_line, seek
from seqsample.sampler import SubsamplePlan, draw_batch, ras_subsample, sas_subsample

work = Path(tempfile.mkdtemp(prefix="demo-addressing-"))


# A tiny store with lines of different lengths, so the byte layout matters.

# In[2]:

(work / "tiny.csv").write_bytes(b"1.5\n-2\n30.25\n4\n")
fh = open_store(work / "tiny.csv")
print("bytes on disk:", fh.n_f)
print("line headers:", fh.header_index().tolist())


# Realignment always moves to the *next* header, even from a header.
# Offset 0 therefore selects the second line, and anything inside the
# last line wraps back to the top.

# In[3]:

for p in range(fh.n_f + 1):
    cur = advance_to_next_header(seek(fh, p))
    rec, _ = read_line(cur)
    print(f"offset {p:2d} -> header {cur.position:2d} wrapped={cur.wrapped!s:5} value={rec.fields[0]}")


# Because of that rule a line is picked with probability proportional to
# the length of the line before it. Fixed-width numbers make every line
# the same length, which is what the generators write.

# In[4]:

rng = np.random.default_rng(0)
s = ras_subsample(fh, 20_000, rng)
heads, counts = np.unique(s.origins, return_counts=True)
print(dict(zip(heads.tolist(), np.round(counts / counts.sum(), 3).tolist())))


# One sequential subsample: a single seek, then consecutive lines with
# wrap-around at the end of the file.

# In[5]:

s = sas_subsample(fh, 3, np.random.default_rng(4))
print("start offset", s.start_offset, "lines", s.lines, "seeks", s.addressing_ops)


# A batch on a bigger fixed-width store. SAS pays B seeks, RAS pays B*n.

# In[6]:

big = work / "big.csv"
vals = np.random.default_rng(1).standard_normal(200_000)
big.write_text("".join("%+011.6f\n" % v for v in vals))
with open_store(big) as f:
    for mode in ("sas", "ras"):
        subs, timing = draw_batch(f, SubsamplePlan(2000, 20, mode), np.random.default_rng(2))
        ops = sum(x.addressing_ops for x in subs)
        print(f"{mode}: seeks={ops:6d} addressing={timing.addressing_cost:.4f}s io={timing.io_cost:.4f}s")

fh.close()
