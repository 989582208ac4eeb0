# %% [markdown]
# # Three-task regression front
#
# Synthetic data from a random relu network; one hypernetwork covers every
# trade-off between the three MSE objectives.

# %%
import numpy as np

from phn import HyperNetSpec, TrainConfig, even_rays, evaluate_front, phn_train, synth_regression

data, problem = synth_regression(n=600, tasks=3, seed=0)
spec = HyperNetSpec(3, problem.target_spec.layout, (25,))
config = TrainConfig(variant="phn-epo", lr=1e-3, steps=600, batch_size=128, eval_steps=[0, 600])
result = phn_train(problem, spec, config, ref_point=(2.0, 2.0, 2.0))
for rep in result.history:
    print(f"step {rep.step}  hv {rep.hv:.4f}")

# %%
front = evaluate_front(result.params, spec, problem, even_rays(6, 3), (2.0, 2.0, 2.0))
for r, l in zip(front.rays, front.losses):
    print(np.round(r, 2), np.round(l, 3))
