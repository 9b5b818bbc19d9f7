# %% [markdown]
# Hypergradients of a quadratic bilevel problem by three routes, checked against the closed form.

# %%
import numpy as np

from ilkit.ad import SGD
from ilkit.blo import LLSolverConfig, hypergrad_implicit, hypergrad_unrolled, imperative_train, solve_lower
from ilkit.blo.fixtures import random_quadratic
from ilkit.rng import make_rng

fx = random_quadratic(make_rng(0), 5, 3)
exact = fx.analytic_grad(fx.psi)

# implicit: solve the lower level, then one CG solve with the lower Hessian
p = fx.problem(fx.gd_config(tol=1e-10))
sol = solve_lower(p, fx.psi)
g_imp = hypergrad_implicit(p, fx.psi, sol.phi).grad

# unrolled: differentiate through every gradient-descent step
p_unr = fx.problem(fx.gd_config(tol=1e-8))
p_unr.ll_solver.steps = solve_lower(p_unr, fx.psi).steps
g_unr = hypergrad_unrolled(p_unr, fx.psi).grad

for name, g in [("implicit", g_imp), ("unrolled", g_unr)]:
    print(f"{name:9s} rel error {np.linalg.norm(g - exact) / np.linalg.norm(exact):.2e}")

# %%
# short unrolls are biased; the gap closes as T grows
step = 1.0 / np.linalg.eigvalsh(fx.A)[-1]
for T in (5, 20, 80, 320):
    g = hypergrad_unrolled(fx.problem(LLSolverConfig("gradient-descent", T, step, tol=1e-14)), fx.psi).grad
    print(f"T={T:4d} gap {np.linalg.norm(g - exact):.2e}")

# %%
# the outer loop: gradient steps on psi with implicit hypergradients
res = imperative_train(p, fx.psi, SGD(0.1), iters=30)
print("upper cost", res.history[0], "->", res.history[-1])
