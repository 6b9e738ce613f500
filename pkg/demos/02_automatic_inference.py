# coding: utf-8

# # Standard errors from the subsamples themselves
#
# Each replication draws a fresh normal dataset, shuffles it on disk,
# takes B sequential subsamples of size n and reports the combined mean
# together with its squared standard error
#
#     SE^2 = c/(B-1) * sum_b (mean_b - combined)^2,  c = n (1/(nB) + 1/N).
#
# Across replications the spread of the estimates should match the
# theoretical variance sigma^2 (1/(nB) + 1/N), and so should the average
# SE^2.

# In[1]:

from seqsample.harness.experiment import ExperimentConfig, run_experiment

rows = []
for n, B in [(100, 10), (100, 100), (1000, 10)]:
    rep = run_experiment(ExperimentConfig(example=1, N=20_000, n=n, B=B, R=60, seed=11))
    rows.append((n, B, rep.mse, rep.ratio_var_varstar, rep.ratio_se2_varstar_mean, rep.ratio_se2_varstar_sd))

print(f"{'n':>5} {'B':>4} {'MSE':>10} {'Var/Var*':>9} {'SE2/Var*':>9} {'(SD)':>6}")
for n, B, mse, rv, rs, sd in rows:
    print(f"{n:5d} {B:4d} {mse:10.3e} {rv:9.2f} {rs:9.2f} {sd:6.2f}")


# A smooth transform: sin of the mean with mu = 1. The aggregate averages
# sin over subsamples and carries the SE^2; the plug-in takes sin of the
# combined mean and has smaller bias but no standard error of its own.

# In[2]:

rep = run_experiment(ExperimentConfig(example=2, N=20_000, n=50, B=50, R=60, seed=12))
print("aggregate MSE %.3e  plug-in MSE %.3e" % (rep.mse, rep.plugin_mse))
print("mean SE^2 / Var* = %.2f" % rep.ratio_se2_varstar_mean)


# Correlation has no closed-form Var*, so compare SE^2 with the
# across-replication variance directly.

# In[3]:

rep = run_experiment(ExperimentConfig(example=4, N=20_000, n=500, B=40, R=60, seed=13))
print("correlation: MSE %.3e  SE^2/Var %.2f" % (rep.mse, rep.ratio_se2_var))
