"""numba kernels shared by the reference path and the fused engine.

All kernels accumulate every output element in ascending reduction order and
never contract multiply/add pairs, so any two kernels that honour the same
order produce identical bits. Activation codes: 0 = linear, 1 = ReLU.
"""
import numpy as np
from numba import njit

F32_ZERO = np.float32(0.0)
F32_TWO = np.float32(2.0)
TK = 16
TN = 16


@njit(nogil=True, cache=True)
def gemm_ascending(a, b, out):
    m, k = a.shape
    n = b.shape[1]
    for r in range(m):
        for kk in range(k):
            av = a[r, kk]
            for c in range(n):
                out[r, c] += av * b[kk, c]


@njit(nogil=True, cache=True)
def gemm_at_b_rows(a, d, k0, k1, out):
    # out[k, n] += sum_m a[m, k] * d[m, n] for k in [k0, k1), m ascending
    m = a.shape[0]
    n = d.shape[1]
    for mm in range(m):
        for kk in range(k0, k1):
            av = a[mm, kk]
            for c in range(n):
                out[kk, c] += av * d[mm, c]


@njit(nogil=True, cache=True)
def gemm_at_b_bf16_rows(a_bits, d_bits, k0, k1, out):
    """Same as ``gemm_at_b_rows`` but widens bf16 rows on the fly."""
    m = a_bits.shape[0]
    width_k = k1 - k0
    n = d_bits.shape[1]
    a_u = np.empty(width_k, dtype=np.uint32)
    d_u = np.empty(n, dtype=np.uint32)
    a_f = a_u.view(np.float32)
    d_f = d_u.view(np.float32)
    for mm in range(m):
        for kk in range(width_k):
            a_u[kk] = np.uint32(a_bits[mm, k0 + kk]) << np.uint32(16)
        for c in range(n):
            d_u[c] = np.uint32(d_bits[mm, c]) << np.uint32(16)
        for kk in range(width_k):
            av = a_f[kk]
            for c in range(n):
                out[k0 + kk, c] += av * d_f[c]


@njit(nogil=True, cache=True, inline="always")
def _to_bf16_bits(u):
    # u: uint32 pattern of an f32 value
    if (u & np.uint32(0x7FFFFFFF)) > np.uint32(0x7F800000):
        return np.uint16((u >> np.uint32(16)) | np.uint32(0x0040))
    lsb = (u >> np.uint32(16)) & np.uint32(1)
    return np.uint16((u + np.uint32(0x7FFF) + lsb) >> np.uint32(16))


@njit(nogil=True, cache=True)
def stage_packed(packed, k, n, staged):
    """Unpack row-pair interleaved bf16 weights into a row-major f32 ``(k, n)`` buffer."""
    su = staged.view(np.uint32)
    for kk in range(k):
        base = (kk // 2) * n
        j = kk % 2
        for c in range(n):
            su[kk, c] = np.uint32(packed[(base + c) * 2 + j]) << np.uint32(16)


@njit(nogil=True, cache=True, inline="always")
def _block_layer(blk, w, act, acc, out_u, tm, width):
    """One layer on a resident block: out_u <- bf16(act(blk @ W)).

    The reduction walks k in TK-sized chunks, ascending inside each chunk, and
    every row update spans all width/TN column tiles at once.
    """
    acc_u = acc.view(np.uint32)
    for r in range(tm):
        for c in range(width):
            acc[r, c] = F32_ZERO
    for k0 in range(0, width, TK):
        for kk in range(k0, k0 + TK):
            for r in range(tm):
                av = blk[r, kk]
                for c in range(width):
                    acc[r, c] += av * w[kk, c]
    if act == 1:
        for r in range(tm):
            for c in range(width):
                if not acc[r, c] > F32_ZERO:
                    acc[r, c] = F32_ZERO
    for r in range(tm):
        for c in range(width):
            out_u[r, c] = _to_bf16_bits(acc_u[r, c])


@njit(nogil=True, cache=True)
def fused_forward_range(x_bits, staged, acts, tm, b0, b1, out_bits):
    """Inference for block-rows ``[b0, b1)``; only the last layer is written."""
    width = x_bits.shape[1]
    nmat = staged.shape[0]
    blk_u = np.empty((tm, width), dtype=np.uint32)
    blk = blk_u.view(np.float32)
    nxt = np.empty((tm, width), dtype=np.uint16)
    acc = np.empty((tm, width), dtype=np.float32)
    for b in range(b0, b1):
        r0 = b * tm
        for r in range(tm):
            for c in range(width):
                blk_u[r, c] = np.uint32(x_bits[r0 + r, c]) << np.uint32(16)
        for layer in range(nmat):
            _block_layer(blk, staged[layer], acts[layer], acc, nxt, tm, width)
            if layer + 1 < nmat:
                for r in range(tm):
                    for c in range(width):
                        blk_u[r, c] = np.uint32(nxt[r, c]) << np.uint32(16)
        for r in range(tm):
            for c in range(width):
                out_bits[r0 + r, c] = nxt[r, c]


@njit(nogil=True, cache=True)
def fused_train_range(x_bits, target, staged, staged_t, acts, tm, b0, b1,
                      m_valid, mask_cols, denom, a_cache, d_cache, loss_rows):
    """Forward, loss block and D recurrence for block-rows ``[b0, b1)``.

    ``a_cache[i]`` receives A_{i+1} and ``d_cache[i]`` receives D_{i+2}, both as
    bf16 bits. ``loss_rows`` gets one f32 partial sum per row (ascending cols).
    """
    width = x_bits.shape[1]
    nmat = staged.shape[0]
    blk_u = np.empty((tm, width), dtype=np.uint32)
    blk = blk_u.view(np.float32)
    nxt = np.empty((tm, width), dtype=np.uint16)
    acc = np.empty((tm, width), dtype=np.float32)
    for b in range(b0, b1):
        r0 = b * tm
        for r in range(tm):
            for c in range(width):
                a_cache[0, r0 + r, c] = x_bits[r0 + r, c]
                blk_u[r, c] = np.uint32(x_bits[r0 + r, c]) << np.uint32(16)
        for layer in range(nmat):
            _block_layer(blk, staged[layer], acts[layer], acc, nxt, tm, width)
            for r in range(tm):
                for c in range(width):
                    a_cache[layer + 1, r0 + r, c] = nxt[r, c]
                    blk_u[r, c] = np.uint32(nxt[r, c]) << np.uint32(16)
        # blk now holds A_nlayers in f32; reuse it for the loss block
        out_act = acts[nmat - 1]
        for r in range(tm):
            row = r0 + r
            total = F32_ZERO
            for c in range(width):
                pred = blk[r, c]
                diff = pred - target[row, c]
                if row >= m_valid or c >= mask_cols:
                    diff = F32_ZERO
                total += (diff * diff) / denom
                dv = (F32_TWO * diff) / denom
                if out_act == 1 and not pred > F32_ZERO:
                    dv = F32_ZERO
                blk[r, c] = dv
            loss_rows[row] = total
            for c in range(width):
                q = _to_bf16_bits(blk_u[r, c])
                nxt[r, c] = q
                d_cache[nmat - 1, row, c] = q
        # backward D recurrence: D_i = sigma_b(A_i, D_{i+1} B_i^T)
        for layer in range(nmat - 1, 0, -1):
            for r in range(tm):
                for c in range(width):
                    blk_u[r, c] = np.uint32(nxt[r, c]) << np.uint32(16)
            _block_layer(blk, staged_t[layer], 0, acc, nxt, tm, width)
            if acts[layer - 1] == 1:
                for r in range(tm):
                    for c in range(width):
                        if a_cache[layer, r0 + r, c] & np.uint16(0x8000) or a_cache[layer, r0 + r, c] == 0:
                            nxt[r, c] = 0
            for r in range(tm):
                for c in range(width):
                    d_cache[layer - 1, r0 + r, c] = nxt[r, c]


@njit(nogil=True, cache=True)
def sequential_sum(values):
    total = F32_ZERO
    for v in values:
        total += v
    return total
