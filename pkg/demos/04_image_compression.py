# %% [markdown]
# # Compressing an image into a tiny network
#
# Pixel coordinates go through a 16-level hash grid (2 features per level) and
# then a 3-matrix width-64 MLP: 12288 bf16 weights, 24 KiB. Each level keeps
# 2^8 hashed entries, so tables plus MLP (56 KiB) are smaller than the 64 KiB
# image. Both the grid tables and the MLP are trained with Adam on the full image.

# %%
import time

import numpy as np

from fusedmlp.image import ImageConfig, infer_image, mlp_weight_bytes, synthetic_image, train_image
from fusedmlp.pgm import write_pgm

STEPS = 200
img = synthetic_image(256, 256, seed=0)
write_pgm("demo_target.pgm", img)
cfg = ImageConfig()
print("MLP weights:", cfg.mlp_config().n_weights, "bytes:", mlp_weight_bytes(cfg.mlp_config()))

# %%
t0 = time.perf_counter()
ckpt, curve = train_image(img, cfg, steps=STEPS)
print(f"{time.perf_counter() - t0:.0f} s")
for row in curve[::25] + curve[-1:]:
    print(f"step {row['step']:5d}  mse {row['mse']:.2e}  psnr {row['psnr']:5.1f} dB")

# %%
recon = infer_image(ckpt, 256, 256, "demo_recon.pgm")
print("max abs pixel error:", int(np.abs(recon.astype(int) - img).max()))
