# %% [markdown]
# # Learning a fixed 64 -> 64 map
#
# The target is y = sin(x W + b) with seeded W, b. We train a 6-layer width-64
# bf16 MLP with full-batch Adam and watch the loss. Lower STEPS for a quick look.

# %%
import time

from fusedmlp.bench import BenchConfig, TargetFunction, Trainer, bench_niter

STEPS = 300
cfg = BenchConfig(lr=1e-3, seed=0)
x, y = TargetFunction(64, 64, cfg.seed).sample(2**14, cfg.seed)
trainer = Trainer(cfg, x, y)
print("initial loss", trainer.loss())

# %%
t0 = time.perf_counter()
for step in range(1, STEPS + 1):
    loss = trainer.step()
    if step % 50 == 0:
        print(f"step {step:5d}  loss {loss:.5f}  {time.perf_counter() - t0:6.1f} s")

# %% [markdown]
# The benchmark sweeps batch sizes with an iteration count that keeps the work
# per batch size roughly constant:

# %%
for e in (11, 14, 18, 20, 22):
    print(f"M=2^{e:<2d} niter={bench_niter(2**e)}")
