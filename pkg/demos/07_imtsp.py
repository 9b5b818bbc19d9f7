# %% [markdown]
# Min-max multi-agent TSP: learn a city-to-agent allocation with a surrogate control variate.

# %%
import numpy as np

from ilkit.mtsp import IMtspConfig, allocation_tours, evaluate_allocation, greedy_assignment, imtsp_train, random_mtsp
from ilkit.rng import make_rng

inst = random_mtsp(make_rng(201, 7), 35, 5, depot=(0.5, 0.5))
res = imtsp_train(inst, IMtspConfig(iters=200), make_rng(1, 8))
for r in res.history[::40]:
    print(f"iter {r.iter:3d}  sampled max-route {r.mean_minmax:.4f}  log var: surrogate {r.log_grad_variance:.2f} / score {r.score_log_variance:.2f}")

# %%
(ev,) = evaluate_allocation(res.alloc, [inst])
print(f"greedy learned allocation {ev.minmax:.4f} vs angular sectors {ev.baseline_minmax:.4f}")
tours = allocation_tours(inst, greedy_assignment(res.alloc, inst))
print("tour lengths", np.round([t.length for t in tours], 3))
