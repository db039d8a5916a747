# %% [markdown]
# # Harnack chains
# Randomized exact torus solutions against the Li-Yau bound, and the
# chain of balls joining two space-time points.

# %%
import numpy as np

from mcflab import harnack

# %%
worst = -np.inf
for sol, mask, t1, t2 in harnack.random_cases(0, 20):
    rep = harnack.harnack_scan(sol, mask, t1, t2, chain_nodes=3)
    worst = max(worst, np.log(rep.quotient / rep.bound))
print("worst log(quotient / bound): %.3f" % worst)

# %%
chain = harnack.ks_chain([1.0, 0.0], [0.0, 0.0], 1, 2, 0.5, l=1)
print("N = %d, R = %s, theta = %s" % (chain.N, chain.R, chain.theta))
print(chain.check(1, 1, 0.5))
