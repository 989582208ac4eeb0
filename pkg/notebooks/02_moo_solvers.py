# %% [markdown]
# # Combination weights for conflicting gradients
#
# Min-norm weights give a direction that lowers every objective; the EPO
# weights additionally pull the losses toward the preference ray.

# %%
import numpy as np

from phn import epo_weights, min_norm_weights
from phn.moo import non_uniformity

rng = np.random.default_rng(0)
G = rng.normal(size=(3, 6))
beta = min_norm_weights(G)
v = G.T @ beta
print("min-norm weights", np.round(beta, 4))
print("g_j . v =", np.round(G @ v, 6), ">= |v|^2 =", round(float(v @ v), 6))

# %%
r = np.array([0.6, 0.3, 0.1])
for losses in (np.array([1.0, 1.0, 1.0]), np.array([1 / 0.6, 1 / 0.3, 1 / 0.1])):
    w = epo_weights(G, losses, r)
    print(f"losses {np.round(losses, 3)}  non-uniformity {non_uniformity(r, losses):.4f}  weights {np.round(w, 4)}")
