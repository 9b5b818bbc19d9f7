# %% [markdown]
# Reverse-mode AD on a tape: gradients, gradients of gradients, and Hessian-vector products.

# %%
import numpy as np

from ilkit import ad

tape = ad.Tape()
x = tape.variable(np.array([0.3, -1.2, 2.0]))
y = ad.tsum(ad.sin(x) * x * x)
(g,) = ad.gradient(y, [x], record=True)  # record=True keeps the backward pass on the tape
print("dy/dx   ", g.numpy())
print("analytic", np.cos(x.numpy()) * x.numpy() ** 2 + 2 * x.numpy() * np.sin(x.numpy()))

# %%
# differentiate the gradient again: d/dx <g, v> = H v
v = np.array([1.0, 0.0, -1.0])
(hv,) = ad.gradient(ad.tsum(g * ad.constant(v)), [x])
print("H v via double backward", hv.numpy())
print("H v via ad.hvp         ", ad.hvp(lambda t: ad.tsum(ad.sin(t) * t * t), x.numpy(), v))

# %%
# constants are not leaves: they get a zero gradient
c = ad.constant(np.ones(3))
print(ad.gradient(ad.tsum(x * c), [c])[0].numpy())
