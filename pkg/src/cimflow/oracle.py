"""Golden reference models.

Both functions stay deliberately naive and do their own index arithmetic so
they cannot share a bug with the mapping/codegen path. All arithmetic is
two's-complement int32, like the hardware: int8 operands widened to int32,
accumulated with wraparound, bias added, then the activation applied.
"""

from __future__ import annotations

import numpy as np

from .model import LayerSpec, infer_ofm_shape, input_padding


def apply_activation(acc: np.ndarray, kind: str) -> np.ndarray:
    """int32 -> int32. leaky_relu divides negatives by 8 (arithmetic shift)."""
    acc = np.asarray(acc, dtype=np.int32)
    if kind == "none":
        return acc
    if kind == "relu":
        return np.maximum(acc, np.int32(0))
    if kind == "leaky_relu":
        return np.where(acc < 0, acc >> 3, acc)
    raise ValueError(f"unknown activation {kind!r}")


def golden_conv2d(layer: LayerSpec, ifm: np.ndarray) -> np.ndarray:
    """Direct convolution, position by position. Returns int32 (O_Y, O_X, K_NUM)."""
    ofm = infer_ofm_shape(layer)
    ky, kx, kz, knum = layer.kernel_shape
    iy, ix, iz = layer.input_shape
    sy, sx = layer.stride
    (pt, _), (pl, _) = input_padding(layer, ofm)
    ifm = np.asarray(ifm)
    if ifm.shape != (iy, ix, iz):
        raise ValueError(f"IFM shape {ifm.shape} != input {layer.input_shape}")
    ifm = ifm.astype(np.int32)
    w = layer.weights.astype(np.int32)
    bias = layer.biases.astype(np.int32)
    out = np.zeros((ofm.o_y, ofm.o_x, knum), dtype=np.int32)
    for y in range(ofm.o_y):
        for x in range(ofm.o_x):
            acc = bias.copy()
            for dy in range(ky):
                src_y = y * sy + dy - pt
                if src_y < 0 or src_y >= iy:
                    continue  # zero padding contributes nothing
                for dx in range(kx):
                    src_x = x * sx + dx - pl
                    if src_x < 0 or src_x >= ix:
                        continue
                    # (K_Z,) . (K_Z, K_NUM) -> (K_NUM,), int32 wraparound
                    acc = acc + ifm[src_y, src_x, :] @ w[dy, dx, :, :]
            out[y, x, :] = apply_activation(acc, layer.activation)
    return out


def golden_im2col_mvm(layer: LayerSpec, ifm: np.ndarray) -> np.ndarray:
    """Unrolled kernel-matrix times unrolled input vectors; same result as
    golden_conv2d. Index arithmetic independent of the mapping module."""
    ofm = infer_ofm_shape(layer)
    ky, kx, kz, knum = layer.kernel_shape
    iy, ix, _ = layer.input_shape
    sy, sx = layer.stride
    (pt, _), (pl, _) = input_padding(layer, ofm)
    ifm = np.asarray(ifm, dtype=np.int32)
    kmat = np.zeros((knum, ky * kx * kz), dtype=np.int32)
    for k in range(knum):
        col = 0
        for dy in range(ky):
            for dx in range(kx):
                for z in range(kz):
                    kmat[k, col] = layer.weights[dy, dx, z, k]
                    col += 1
    out = np.zeros((ofm.o_y, ofm.o_x, knum), dtype=np.int32)
    vec = np.zeros(ky * kx * kz, dtype=np.int32)
    for y in range(ofm.o_y):
        for x in range(ofm.o_x):
            vec[:] = 0
            col = 0
            for dy in range(ky):
                for dx in range(kx):
                    src_y, src_x = y * sy + dy - pt, x * sx + dx - pl
                    if 0 <= src_y < iy and 0 <= src_x < ix:
                        vec[col:col + kz] = ifm[src_y, src_x, :]
                    col += kz
            acc = (kmat @ vec) + layer.biases.astype(np.int32)
            out[y, x, :] = apply_activation(acc, layer.activation)
    return out
