# %% [markdown]
# # How much can fusing an MLP buy?
#
# A small MLP layer does 2*64*64 flops per batch row. Unfused, every layer reads
# and writes a 64-wide bf16 row from main memory, so the intensity is stuck at
# 32 flops/byte. Fused, a block of rows stays on chip and only the weights are
# reloaded once per group of rows.

# %%
from fusedmlp import roofline as rl

sycl = rl.KernelModel(rl.Scheme.FUSED_SYCL, tm=8)
cuda = rl.KernelModel(rl.Scheme.FUSED_CUDA)
print("per-layer OI   sycl %.0f  cuda %.0f" % (rl.oi_layer(sycl), rl.oi_layer(cuda)))
print("unfused OI     %.0f" % rl.oi_unfused(6))

# %% [markdown]
# Including the input load and output store, a 6-layer network at 2 TB/s:

# %%
for model, prof in ((sycl, rl.INTEL_MAX_1550), (cuda, rl.H100_PCIE)):
    oi = rl.oi_inference(model, 6)
    rep = rl.peak_estimate(oi, rl.oi_slm(model), prof)
    print(f"{model.scheme.value:5s} OI {oi:7.2f}  bound {rep.peak_flops / 1e12:6.1f} Tflop/s")

# %% [markdown]
# The shared-local-memory side caps the SYCL scheme too: 7.88 flops per SLM byte.

# %%
print("SLM-bound cap %.0f Tflop/s" % (rl.oi_slm(sycl) * rl.INTEL_MAX_1550.slm_bw_Bps / 1e12))

# %% [markdown]
# Training stores every activation, so intensity drops. Two accountings of the
# forward pass are available; the table below prints both.

# %%
print(" n   sycl   sycl-alt   cuda")
for n in range(2, 9):
    print(f"{n:2d} {rl.oi_train_forward_printed(rl.Scheme.FUSED_SYCL, n):6.2f} "
          f"{rl.oi_train_forward_printed(rl.Scheme.FUSED_SYCL, n, alternative=True):9.2f} "
          f"{rl.oi_train_forward_printed(rl.Scheme.FUSED_CUDA, n):6.2f}")

# %%
rows = rl.roofline_rows(range(2, 9), tms=(1, 2, 4, 8), mode="inference")
print(rl.rows_to_csv(rows[:5]))
