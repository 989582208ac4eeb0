# %% [markdown]
# # Hypervolume and uniformity

# %%
import numpy as np

from phn import hypervolume, hypervolume_mc, non_dominated_filter, uniformity

stairs = np.array([[1.0, 3.0], [2.0, 2.0], [3.0, 1.0], [2.5, 2.5]])
print("non-dominated rows", non_dominated_filter(stairs))
print("exact hv", hypervolume(stairs, (4.0, 4.0)))
est, se = hypervolume_mc(stairs, (4.0, 4.0), 1_000_000, np.random.default_rng(0), lower=np.zeros(2))
print(f"monte carlo hv {est:.4f} +- {se:.4f}")

# %%
r = np.array([0.25, 0.75])
print("balanced", uniformity(r, 1.0 / r))
print("skewed  ", round(uniformity(r, np.array([1.0, 1.0])), 4))
print("scaled  ", round(uniformity(r, np.array([100.0, 100.0])), 4))
