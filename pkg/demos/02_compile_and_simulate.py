#!/usr/bin/env python3
"""
From layer description to executed instruction streams
======================================================

Compile a small layer, peek at the generated code, then run it on the
event-driven machine model and check the output against a plain numpy
convolution.
"""

import numpy as np

from cimflow import isa
from cimflow.codegen import emit_program, write_bin, write_cfg
from cimflow.fixtures import make_layer, random_ifm
from cimflow.mapping import build_mapping_plan
from cimflow.oracle import golden_conv2d
from cimflow.simulator import ArchConfig, load_setup, run

rng = np.random.default_rng(42)
layer = make_layer("toy", kernel_shape=(3, 3, 4, 6), input_shape=(6, 6, 4),
                   rng=rng, padding="valid", activation="relu")

plan = build_mapping_plan(layer, rows=8, cols=16)
program = emit_program(plan, scheme="linear")
print(f"{plan.partition.core_count} cores, scheme {program.scheme}")

# first few instructions of the first and the last core in one chain
for core in (0, plan.partition.v_groups - 1):
    stream = program.streams[core]
    print(f"\ncore {core} ({len(stream)} instructions):")
    for instr in stream[:7]:
        print("   " + isa.format_instr(instr))

# serialize exactly like the CLI would, then load and run
blob = write_bin(program)
cfg = write_cfg(plan, program)
ifm = random_ifm(layer, rng)
print(f"\nbinary image {len(blob)} bytes, cfg {len(cfg)} bytes")

state = load_setup(blob, cfg, ifm)
report = run(state, ArchConfig(rows=8, cols=16, scheme="linear"))

golden = golden_conv2d(layer, ifm)
print(f"simulated {report.total_cycles} cycles on {report.core_count} cores")
print(f"loads={report.counts.loads_values} stores={report.counts.stores_values} "
      f"calls={report.counts.calls}")
print("OFM matches the numpy reference:", np.array_equal(report.ofm, golden))
