"""Binary checkpoints for MLP weights and optional hash-grid tables.

Layout (little-endian)::

    magic    6 bytes  b"TFMLP1"
    version  u32      1
    width, in_width, out_width, nlayers        4 x u32
    hidden_act, output_act, precision, has_enc 4 x u8
    [levels, features, base_res u32; scale f64; log2_table u32]   if has_enc
    weights  (nlayers-1) x width x width, u16 bf16 bits or f32
    tables   levels x 2^log2_table x features f32                 if has_enc
    crc32    u32 over everything before it
"""
from __future__ import annotations

import os
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from fusedmlp.encoding import HashGridConfig
from fusedmlp.model import Activation, MlpConfig, MlpParams, Precision

MAGIC = b"TFMLP1"
VERSION = 1
_ACTS = [Activation.LINEAR, Activation.RELU]
_PRECISIONS = [Precision.F32, Precision.BF16]
_HEAD = struct.Struct("<6sI4I4B")
_ENC = struct.Struct("<3IdI")
_CRC = struct.Struct("<I")


class CheckpointError(ValueError):
    pass


@dataclass
class Checkpoint:
    params: MlpParams
    encoding: HashGridConfig | None = None
    tables: np.ndarray | None = None

    @property
    def config(self) -> MlpConfig:
        return self.params.config


def _weight_dtype(precision: Precision):
    return np.dtype("<u2") if precision is Precision.BF16 else np.dtype("<f4")


def to_bytes(ckpt: Checkpoint) -> bytes:
    cfg = ckpt.config
    has_enc = ckpt.encoding is not None
    parts = [_HEAD.pack(MAGIC, VERSION, cfg.width, cfg.in_width, cfg.out_width, cfg.nlayers,
                        _ACTS.index(cfg.hidden_activation), _ACTS.index(cfg.output_activation),
                        _PRECISIONS.index(cfg.precision), int(has_enc))]
    if has_enc:
        e = ckpt.encoding
        parts.append(_ENC.pack(e.levels, e.features_per_level, e.base_resolution,
                               e.per_level_scale, e.log2_table_size))
    dtype = _weight_dtype(cfg.precision)
    parts += [np.ascontiguousarray(w, dtype=dtype).tobytes() for w in ckpt.params.weights]
    if has_enc:
        shape = (ckpt.encoding.levels, ckpt.encoding.table_size, ckpt.encoding.features_per_level)
        if ckpt.tables is None or ckpt.tables.shape != shape:
            raise CheckpointError(f"hash tables must have shape {shape}")
        parts.append(np.ascontiguousarray(ckpt.tables, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + _CRC.pack(zlib.crc32(body))


def from_bytes(data: bytes) -> Checkpoint:
    if len(data) < _HEAD.size:
        raise CheckpointError(f"truncated header: expected at least {_HEAD.size} bytes, got {len(data)}")
    magic, version, width, in_w, out_w, nlayers, hid, out_act, prec, has_enc = _HEAD.unpack_from(data, 0)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r} at offset 0, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version} at offset 6")
    if hid >= len(_ACTS) or out_act >= len(_ACTS) or prec >= len(_PRECISIONS) or has_enc > 1:
        raise CheckpointError("bad enum field in header at offset 26")
    offset = _HEAD.size
    encoding = None
    if has_enc:
        if len(data) < offset + _ENC.size:
            raise CheckpointError(f"truncated: expected at least {offset + _ENC.size} bytes, got {len(data)}")
        levels, feats, base, scale, log2t = _ENC.unpack_from(data, offset)
        encoding = HashGridConfig(levels, feats, base, scale, log2t)
        offset += _ENC.size
    try:
        cfg = MlpConfig(width=width, nlayers=nlayers, in_width=in_w, out_width=out_w,
                        hidden_activation=_ACTS[hid], output_activation=_ACTS[out_act],
                        precision=_PRECISIONS[prec])
    except ValueError as exc:
        raise CheckpointError(f"invalid config in header: {exc}") from None
    dtype = _weight_dtype(cfg.precision)
    wbytes = cfg.nmatrices * width * width * dtype.itemsize
    tbytes = encoding.levels * encoding.table_size * encoding.features_per_level * 4 if encoding else 0
    expected = offset + wbytes + tbytes + _CRC.size
    if len(data) != expected:
        kind = "truncated" if len(data) < expected else "trailing data"
        raise CheckpointError(f"{kind}: expected {expected} bytes, got {len(data)}")
    (crc,) = _CRC.unpack_from(data, expected - _CRC.size)
    if crc != zlib.crc32(data[:expected - _CRC.size]):
        raise CheckpointError(f"checksum mismatch at offset {expected - _CRC.size}")
    weights = []
    for _ in range(cfg.nmatrices):
        w = np.frombuffer(data, dtype=dtype, count=width * width, offset=offset)
        weights.append(w.reshape(width, width).astype(dtype.newbyteorder("=")))
        offset += width * width * dtype.itemsize
    tables = None
    if encoding:
        shape = (encoding.levels, encoding.table_size, encoding.features_per_level)
        tables = np.frombuffer(data, dtype="<f4", count=int(np.prod(shape)), offset=offset)
        tables = tables.reshape(shape).astype(np.float32)
    return Checkpoint(MlpParams(cfg, weights), encoding, tables)


def checkpoint_save(path: str | os.PathLike, ckpt: Checkpoint) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(ckpt))


def checkpoint_load(path: str | os.PathLike) -> Checkpoint:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
