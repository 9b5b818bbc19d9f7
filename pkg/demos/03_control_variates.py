# %% [markdown]
# Score-function vs control-variate gradients on a categorical toy.

# %%
import numpy as np

from ilkit.discrete import CategoricalToy, expectation, load_cost
from ilkit.rng import make_rng

rng = make_rng(3)
toy = CategoricalToy(rng.normal(size=(3, 4)), load_cost(rng, 3, 4))
rho = toy.fit_surrogate(rng)
print(f"surrogate correlation {rho:.3f}")

# exact: enumerate all 64 outcomes
batch, probs = toy.enumeration_batch()
exact = toy.exact_grad()
for name, per in [("score", batch.per_sample_score()), ("control variate", batch.per_sample_control_variate())]:
    print(f"{name:16s} bias {np.abs(expectation(per, probs) - exact).max():.1e}")

# %%
# same draws, two estimators
b = toy.batch(toy.sample(rng, 10_000))
vs = b.per_sample_score().reshape(10_000, -1).var(axis=0).sum()
vc = b.per_sample_control_variate().reshape(10_000, -1).var(axis=0).sum()
print(f"variance: score {vs:.3e}, control variate {vc:.3e}, ratio {vc / vs:.2e}")
