# %% [markdown]
# Imperative MPC: recover a mis-specified inertia while a denoiser cleans the measurements.

# %%
from ilkit.mpc import IMpcConfig, impc_train
from ilkit.rng import make_rng

cfg = IMpcConfig(episodes=10)  # starts from p_hat = 1.5 p_true
res = impc_train(cfg, make_rng(0, 0))
for r in res.history:
    print(f"episode {r.episode:2d}  p_hat {r.p_hat:.4f}  tracking rmse {r.rmse:.4f}  est/raw state error {r.est_rmse:.4f}/{r.raw_rmse:.4f}")
print(f"relative p error {abs(res.p_hat - cfg.p_true) / cfg.p_true:.2%}")
