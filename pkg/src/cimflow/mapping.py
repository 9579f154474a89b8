"""im2col weight partitioning onto an M x N crossbar core grid.

The unrolled kernel matrix (K_NUM rows, K_Y*K_X*K_Z columns) is tiled onto
ceil(K_NUM/M) x ceil(K/N) cores. Cores in the same horizontal group (hg)
compute partial sums of the same output rows and must accumulate; cores in
the same vertical group (vg) consume the same input slice. Remainder tiles
go to the last group in each direction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import LayerSpec, OfmShape, infer_ofm_shape, input_padding


class MappingError(Exception):
    pass


@dataclass(frozen=True)
class Partition:
    """Core-grid geometry for one layer on M x N crossbars."""

    rows: int            # M
    cols: int            # N
    h_groups: int        # ceil(K_NUM / M)
    v_groups: int        # ceil(K / N)
    row_sizes: tuple     # effective rows per hg, remainder last
    col_sizes: tuple     # effective cols per vg, remainder last

    @property
    def core_count(self) -> int:
        return self.h_groups * self.v_groups


def compute_partition(kernel_shape, rows: int, cols: int) -> Partition:
    ky, kx, kz, knum = kernel_shape
    if rows < 1 or cols < 1:
        raise MappingError(f"crossbar dims must be positive, got {rows}x{cols}")
    k = ky * kx * kz
    h_groups = -(-knum // rows)
    v_groups = -(-k // cols)
    row_sizes = tuple(min(rows, knum - h * rows) for h in range(h_groups))
    col_sizes = tuple(min(cols, k - v * cols) for v in range(v_groups))
    return Partition(rows, cols, h_groups, v_groups, row_sizes, col_sizes)


def unroll_kernel_matrix(layer: LayerSpec) -> np.ndarray:
    """int8 (K_NUM, K_Y*K_X*K_Z); row k = kernel k flattened (y, x, z), z innermost."""
    ky, kx, kz, knum = layer.kernel_shape
    return layer.weights.reshape(ky * kx * kz, knum).T.copy()


def unroll_input_vector(layer: LayerSpec, ifm: np.ndarray, y: int, x: int) -> np.ndarray:
    """int8 (K_Y*K_X*K_Z,) input vector for output position (y, x), zero padded."""
    ofm = infer_ofm_shape(layer)
    ky, kx, kz, _ = layer.kernel_shape
    iy, ix, _ = layer.input_shape
    sy, sx = layer.stride
    (pt, _), (pl, _) = input_padding(layer, ofm)
    vec = np.zeros(layer.k_total, dtype=np.int8)
    for dy in range(ky):
        src_y = y * sy + dy - pt
        if not 0 <= src_y < iy:
            continue
        for dx in range(kx):
            src_x = x * sx + dx - pl
            if not 0 <= src_x < ix:
                continue
            base = (dy * kx + dx) * kz
            vec[base:base + kz] = ifm[src_y, src_x, :]
    return vec


@dataclass
class MappingPlan:
    """Partition plus the per-core tiles/biases and input addressing info."""

    layer: LayerSpec
    ofm: OfmShape
    partition: Partition
    tiles: dict = field(repr=False)          # (hg, vg) -> int8 (M_h, N_v)
    bias_slices: list = field(repr=False)    # hg -> int32 (M_h,)
    pad_top: int = 0
    pad_left: int = 0

    def core_id(self, hg: int, vg: int) -> int:
        return hg * self.partition.v_groups + vg

    def core_groups(self, core: int) -> tuple:
        return divmod(core, self.partition.v_groups)

    def row_start(self, hg: int) -> int:
        return hg * self.partition.rows

    def input_index_map(self, vg: int, y: int, x: int) -> list:
        """IFM coordinates (iy, ix, iz) for each of the N_v slice elements,
        None where the element falls into zero padding."""
        ky, kx, kz, _ = self.layer.kernel_shape
        iy, ix, _ = self.layer.input_shape
        sy, sx = self.layer.stride
        n = self.partition.cols
        out = []
        for u in range(vg * n, vg * n + self.partition.col_sizes[vg]):
            patch, z = divmod(u, kz)
            dy, dx = divmod(patch, kx)
            src_y, src_x = y * sy + dy - self.pad_top, x * sx + dx - self.pad_left
            out.append((src_y, src_x, z) if 0 <= src_y < iy and 0 <= src_x < ix else None)
        return out

    def input_slice_runs(self, vg: int, y: int, x: int) -> list:
        """Slice as maximal contiguous runs: ('ifm', flat_index, length) for
        in-bounds stretches, ('zero', None, length) for padded ones. A run is
        contiguous in IFM flat (y, x, z) order, so each becomes one burst."""
        ix_dim, iz = self.layer.input_shape[1], self.layer.input_shape[2]
        runs = []
        for coord in self.input_index_map(vg, y, x):
            flat = None if coord is None else (coord[0] * ix_dim + coord[1]) * iz + coord[2]
            if runs:
                kind, start, length = runs[-1]
                if flat is None and kind == "zero":
                    runs[-1] = (kind, None, length + 1)
                    continue
                if flat is not None and kind == "ifm" and flat == start + length:
                    runs[-1] = (kind, start, length + 1)
                    continue
            runs.append(("zero", None, 1) if flat is None else ("ifm", flat, 1))
        return runs

    def input_slice(self, ifm: np.ndarray, vg: int, y: int, x: int) -> np.ndarray:
        full = unroll_input_vector(self.layer, ifm, y, x)
        n = self.partition.cols
        return full[vg * n:vg * n + self.partition.col_sizes[vg]]


def build_mapping_plan(layer: LayerSpec, rows: int, cols: int) -> MappingPlan:
    if layer.weights is None or layer.biases is None:
        raise MappingError(f"{layer.name}: mapping needs weights and biases")
    part = compute_partition(layer.kernel_shape, rows, cols)
    ofm = infer_ofm_shape(layer)
    kmat = unroll_kernel_matrix(layer)
    tiles = {}
    for hg in range(part.h_groups):
        r0 = hg * rows
        for vg in range(part.v_groups):
            c0 = vg * cols
            tiles[(hg, vg)] = kmat[r0:r0 + part.row_sizes[hg],
                                   c0:c0 + part.col_sizes[vg]].copy()
    bias_slices = [layer.biases[hg * rows:hg * rows + part.row_sizes[hg]].copy()
                   for hg in range(part.h_groups)]
    (pt, _), (pl, _) = input_padding(layer, ofm)
    return MappingPlan(layer=layer, ofm=ofm, partition=part, tiles=tiles,
                       bias_slices=bias_slices, pad_top=pt, pad_left=pl)


def format_plan(plan: MappingPlan) -> str:
    """Human-readable core grid dump for debugging."""
    p = plan.partition
    lines = [
        f"layer {plan.layer.name}: kernel {plan.layer.kernel_shape} "
        f"input {plan.layer.input_shape} -> ofm ({plan.ofm.o_y}, {plan.ofm.o_x}, {plan.ofm.o_z})",
        f"crossbar {p.rows}x{p.cols}: {p.h_groups} HG x {p.v_groups} VG = {p.core_count} cores, "
        f"{plan.ofm.out_vectors} output vectors per HG",
    ]
    for hg in range(p.h_groups):
        cells = []
        for vg in range(p.v_groups):
            t = plan.tiles[(hg, vg)]
            cells.append(f"c{plan.core_id(hg, vg):<4} {t.shape[0]:>3}x{t.shape[1]:<3}")
        r0 = hg * p.rows
        lines.append(f"  hg{hg} rows[{r0}:{r0 + p.row_sizes[hg]}] | " + " | ".join(cells))
    return "\n".join(lines)
