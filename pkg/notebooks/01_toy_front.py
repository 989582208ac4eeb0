# %% [markdown]
# # Learning the toy front with one hypernetwork
#
# A small version of the toy run: d=10 point, short training, then a sweep
# over 11 rays. Prints the recovered front next to the analytic one.

# %%
import numpy as np

from phn import HyperNetSpec, ToyProblem, TrainConfig, even_rays, evaluate_front, hypervolume, phn_train, toy_front_oracle

problem = ToyProblem(10)
spec = HyperNetSpec(2, problem.target_spec.layout, (32, 32))
config = TrainConfig(variant="phn-epo", lr=1e-3, steps=1500, batch_size=None, eval_steps=[0, 500, 1500])
result = phn_train(problem, spec, config, ref_point=(2.0, 2.0))
for rep in result.history:
    print(f"step {rep.step:5d}  hv {rep.hv:.4f}  median uniformity {rep.median_uniformity:.3f}")

# %%
front = evaluate_front(result.params, spec, problem, even_rays(11, 2), (2.0, 2.0))
oracle = toy_front_oracle(100_000)
print("oracle hv", round(hypervolume(oracle, (2.0, 2.0)), 4))
for r, l, u in zip(front.rays, front.losses, front.uniformity):
    print(f"r=({r[0]:.2f}, {r[1]:.2f})  losses=({l[0]:.3f}, {l[1]:.3f})  uniformity {u:.3f}")
