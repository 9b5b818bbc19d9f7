# %% [markdown]
# Learned heuristics for grid A*: shipped weights vs Euclidean A* on fresh mazes.

# %%
import numpy as np

from ilkit.ad import load_weights
from ilkit.astar import astar_classic, evaluate_map, format_map, heuristic_field, planner_heuristic, random_instance
from ilkit.cli import shipped_iastar_weights
from ilkit.rng import make_rng

params = load_weights(shipped_iastar_weights())
rng = make_rng(42)
maps = [random_instance(rng, 32) for _ in range(20)]
print(format_map(maps[0]))

# %%
evals = [evaluate_map(k, m, params, timing_repeats=1) for k, m in enumerate(maps)]
print(f"mean Exp {np.mean([e.exp_pct for e in evals]):.1f}%  (fewer expansions than Euclidean A*)")
print(f"cost ratio <= 1.05 on {np.mean([e.cost_ratio <= 1.05 for e in evals]):.0%} of maps")

# %%
# expansions on one map
m = maps[0]
base = astar_classic(m, m.euclidean())
learned = astar_classic(m, planner_heuristic(m, heuristic_field(params, m)))
print("expanded: euclidean", base.explored_count, "learned", learned.explored_count)
print("path cost: euclidean", round(base.path_cost, 3), "learned", round(learned.path_cost, 3))

# %% [markdown]
# Retrain from scratch with `ilkit astar-train --out runs/astar` (about 4 minutes on one core).
