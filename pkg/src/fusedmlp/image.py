"""Grayscale image compression: a hash-encoded coordinate MLP fitted to one image."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from fusedmlp.checkpoint import Checkpoint
from fusedmlp.encoding import HashGridConfig, HashGridParams, hash_grid_backward, hash_grid_forward
from fusedmlp.fused import FusedEngine, TileConfig, pad_batch
from fusedmlp.model import MlpConfig, MlpParams, Precision, init_params, input_gradient
from fusedmlp.optim import OptimizerState, optimizer_step
from fusedmlp.pgm import read_pgm

CURVE_COLUMNS = ("step", "mse", "psnr")


def default_image_encoding() -> HashGridConfig:
    # 2^8 entries per level: 8192 f32 table values + 12288 bf16 weights (56 KiB)
    # stay below one byte per pixel of a 256x256 image
    return HashGridConfig(levels=16, features_per_level=2, log2_table_size=8)


@dataclass
class ImageConfig:
    width: int = 64
    nlayers: int = 4
    encoding: HashGridConfig = field(default_factory=default_image_encoding)
    lr_mlp: float = 1e-3
    lr_tables: float = 1e-2
    table_init_scale: float = 1e-4
    tm: int = 8
    workers: int = 1
    seed: int = 0

    def mlp_config(self) -> MlpConfig:
        return MlpConfig(width=self.width, nlayers=self.nlayers, in_width=self.encoding.output_dim,
                         out_width=1, precision=Precision.BF16)


def pixel_coords(height: int, width: int) -> np.ndarray:
    """Pixel-center coordinates in [0, 1]^2, row-major, as (x, y) pairs."""
    ys, xs = np.meshgrid((np.arange(height) + 0.5) / height, (np.arange(width) + 0.5) / width,
                         indexing="ij")
    return np.stack([xs.ravel(), ys.ravel()], axis=1)


def psnr(mse: float) -> float:
    """PSNR in dB for signals in [0, 1]."""
    return math.inf if mse <= 0 else -10.0 * math.log10(mse)


def mlp_weight_bytes(cfg: MlpConfig, bytes_per_weight: int = 2) -> int:
    return cfg.n_weights * bytes_per_weight


class ImageModel:
    """Hash encoding g followed by the MLP f; evaluates h(x) = f(g(x))."""

    def __init__(self, params: MlpParams, encoding: HashGridConfig, tables: np.ndarray, tile: TileConfig):
        self.params = params
        self.encoding = encoding
        self.grid = HashGridParams(tables)
        self.tile = tile

    def _encode(self, coords):
        feats, ctx = hash_grid_forward(self.grid, self.encoding, coords)
        x, report = pad_batch(feats, self.tile, self.params.config.width)
        return x, report, ctx

    def predict(self, coords: np.ndarray) -> np.ndarray:
        x, report, _ = self._encode(coords)
        out = FusedEngine(self.params, self.tile).inference(x)
        return out[:report.original_m, 0]

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(self.params, self.encoding, self.grid.tables.copy())

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint, tile: TileConfig | None = None) -> "ImageModel":
        if ckpt.encoding is None:
            raise ValueError("checkpoint has no hash encoding")
        return cls(ckpt.params, ckpt.encoding, ckpt.tables, tile or TileConfig())


def train_image(image, cfg: ImageConfig, steps: int = 1000, log_every: int = 1):
    """Fit the model to a grayscale image with full-batch Adam.

    ``image`` is a PGM path or a 2-D uint8 array. Returns ``(Checkpoint, curve)``
    where ``curve`` is a list of ``{"step", "mse", "psnr"}`` dicts; the MSE at a
    step is measured before that step's update, and one extra row after the last
    update evaluates the final model.
    """
    img = read_pgm(image) if not isinstance(image, np.ndarray) else image
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError("expected an 8-bit grayscale image")
    h, w = img.shape
    coords = pixel_coords(h, w)
    mlp_cfg = cfg.mlp_config()
    tile = TileConfig(tm=cfg.tm, workers=cfg.workers)
    params = init_params(mlp_cfg, cfg.seed)
    grid = HashGridParams.init(cfg.encoding, cfg.seed + 1, cfg.table_init_scale)
    model = ImageModel(params, cfg.encoding, grid.tables, tile)

    target = np.zeros((math.ceil(h * w / tile.tm) * tile.tm, mlp_cfg.width), dtype=np.float32)
    target[:h * w, 0] = img.ravel().astype(np.float32) / 255.0
    opt_mlp = OptimizerState("adam", lr=cfg.lr_mlp)
    opt_tab = OptimizerState("adam", lr=cfg.lr_tables)
    nfeat = cfg.encoding.output_dim
    curve = []
    for step in range(steps):
        x, report, ctx = model._encode(coords)
        loss, grads, _, dcache = FusedEngine(model.params, tile).train(x, target, 1, report.original_m)
        if step % log_every == 0:
            curve.append({"step": step, "mse": float(loss), "psnr": psnr(float(loss))})
        d_feats = input_gradient(model.params, dcache)[:report.original_m, :nfeat]
        table_grad = hash_grid_backward(ctx, d_feats)
        model.params = optimizer_step(opt_mlp, model.params, grads)
        opt_tab.advance()
        opt_tab.update("tables", model.grid.tables, table_grad)
    pred = model.predict(coords)
    final = float(np.mean((pred.astype(np.float64) - target[:h * w, 0]) ** 2))
    curve.append({"step": steps, "mse": final, "psnr": psnr(final)})
    return model.checkpoint(), curve


def reconstruct(ckpt: Checkpoint, height: int, width: int, tile: TileConfig | None = None) -> np.ndarray:
    """Model output on the pixel grid as f32 values (not clamped)."""
    return ImageModel.from_checkpoint(ckpt, tile).predict(pixel_coords(height, width)).reshape(height, width)


def to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(values, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def infer_image(ckpt: Checkpoint, height: int, width: int, out_path=None,
                tile: TileConfig | None = None) -> np.ndarray:
    """Reconstruct the image; writes a PGM when ``out_path`` is given."""
    from fusedmlp.pgm import write_pgm

    img = to_uint8(reconstruct(ckpt, height, width, tile))
    if out_path is not None:
        write_pgm(out_path, img)
    return img


def write_curve_csv(curve: list[dict], stream=None) -> str:
    stream = stream or io.StringIO()
    writer = csv.DictWriter(stream, fieldnames=CURVE_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(curve)
    return stream.getvalue() if isinstance(stream, io.StringIO) else ""


def synthetic_image(height: int = 256, width: int = 256, seed: int = 0) -> np.ndarray:
    """Deterministic test image: smooth gradients, rings, edges and a little texture."""
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:height, 0:width] / np.array([height, width]).reshape(2, 1, 1)
    r = np.hypot(x - 0.4, y - 0.55)
    img = 0.35 + 0.25 * x + 0.15 * np.sin(14 * np.pi * r) * np.exp(-3 * r)
    img += 0.2 * ((x > 0.62) & (x < 0.85) & (y > 0.12) & (y < 0.4))
    img -= 0.18 * (np.hypot(x - 0.25, y - 0.22) < 0.1)
    img += 0.05 * np.sin(40 * np.pi * x) * np.sin(30 * np.pi * y)
    img += 0.02 * rng.standard_normal((height, width))
    return np.clip(np.rint(img * 255), 0, 255).astype(np.uint8)
