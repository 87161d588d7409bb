# %% [markdown]
# # Fused engine vs the layer-by-layer reference
#
# Both paths round activations to bf16 and accumulate in f32 in the same order,
# so they must agree bit for bit. The fused one just never materializes the
# intermediate layers for the whole batch.

# %%
import time

import numpy as np

from fusedmlp import MlpConfig, TileConfig, forward_reference, fused_inference, init_params, pad_batch
from fusedmlp import fused_train, train_step_reference

cfg = MlpConfig(width=64, nlayers=6)
params = init_params(cfg, seed=0)
x = np.random.default_rng(0).uniform(-1, 1, (2**15, 64)).astype(np.float32)
tile = TileConfig(tm=8, workers=1)
bits, report = pad_batch(x, tile, cfg.width)
print(report)

# %%
out_f = fused_inference(params, bits, tile)
out_r, _ = forward_reference(params, bits)
print("bitwise equal:", np.array_equal(out_f.view(np.uint32), out_r.view(np.uint32)))

# %% [markdown]
# Timing (numba compiles on first call, so warm up first).

# %%
for name, fn in (("fused", lambda: fused_inference(params, bits, tile)),
                 ("reference", lambda: forward_reference(params, bits))):
    fn()
    t0 = time.perf_counter()
    for _ in range(3):
        fn()
    dt = (time.perf_counter() - t0) / 3
    print(f"{name:10s} {dt * 1e3:7.1f} ms  {2 * 64 * 64 * 5 * bits.shape[0] / dt / 1e9:5.1f} Gflop/s")

# %% [markdown]
# Training: loss and every weight gradient match too, for any worker count.

# %%
target = np.sin(x).astype(np.float32)
loss_r, g_r = train_step_reference(params, bits, target, 64)
for workers in (1, 3):
    loss_f, g_f, _, _ = fused_train(params, bits, target, TileConfig(tm=8, workers=workers))
    same = loss_f == loss_r and all(np.array_equal(a, b) for a, b in zip(g_f.g, g_r.g))
    print(f"workers={workers}: loss {loss_f:.6f}, identical to reference: {same}")
