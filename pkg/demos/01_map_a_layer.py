#!/usr/bin/env python3
"""
Mapping one convolution layer onto a grid of crossbar cores
===========================================================

A conv2d layer is lowered to a matrix-vector product: the kernel stack
becomes a K_NUM x (K_Y*K_X*K_Z) matrix and every output pixel becomes one
input vector. When the matrix is larger than a single crossbar it is cut
into tiles, one core per tile.
"""

import numpy as np

from cimflow.fixtures import make_layer
from cimflow.mapping import build_mapping_plan, compute_partition, format_plan

rng = np.random.default_rng(7)
layer = make_layer("demo", kernel_shape=(3, 3, 8, 20), input_shape=(10, 10, 8),
                   rng=rng, padding="same", activation="relu")

# the kernel matrix is 20 rows (kernels) x 72 columns (3*3*8 weights each)
part = compute_partition(layer.kernel_shape, rows=16, cols=32)
print(f"kernel matrix : {sum(part.row_sizes)} x {sum(part.col_sizes)}")
print(f"16x32 crossbars: {part.h_groups} horizontal x {part.v_groups} vertical "
      f"groups = {part.core_count} cores")
print(f"row tile sizes : {part.row_sizes}")   # remainder lands in the last group
print(f"col tile sizes : {part.col_sizes}")
print()

# the full plan carries the weight tiles, bias slices and input layout
plan = build_mapping_plan(layer, 16, 32)
print(format_plan(plan))
print()

# every core knows which slice of the im2col input vector it consumes.
# Padding is serviced from a zero page, so a slice is a list of runs that
# alternate between real IFM stretches and zeros:
runs = plan.input_slice_runs(vg=1, y=0, x=0)
print("input slice runs for output pixel (0,0), vertical group 1:")
for src, start, length in runs[:6]:
    where = "zero page" if start is None else f"ifm flat {start:4d}"
    print(f"  {src:4s} <- {where}, {length} values")
print(f"  ... {len(runs)} runs, {sum(r[2] for r in runs)} values total "
      f"= this core's column count")
