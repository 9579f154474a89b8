#!/usr/bin/env python3
"""
Watching the handshake protocol work - and watching it fail
===========================================================

Every partial-sum buffer must be touched by exactly one core at a time, in
accumulation order, with exactly one store per owner. The trace monitor
proves that from a recorded run. Then we corrupt one WAIT threshold the way
a flipped bit would and show the machine stalls into a DETECTED deadlock
instead of producing a wrong answer.
"""

import numpy as np

from cimflow.codegen import emit_program, tamper_wait, write_bin, write_cfg
from cimflow.fixtures import make_layer, random_ifm
from cimflow.mapping import build_mapping_plan
from cimflow.monitor import check_protocol
from cimflow.oracle import golden_conv2d
from cimflow.simulator import ArchConfig, DeadlockError, load_setup, run

rng = np.random.default_rng(11)
layer = make_layer("victim", kernel_shape=(2, 2, 6, 9), input_shape=(5, 5, 6),
                   rng=rng, padding="valid")
plan = build_mapping_plan(layer, rows=8, cols=8)
arch = ArchConfig(rows=8, cols=8, scheme="linear")
ifm = random_ifm(layer, rng)
print(f"{plan.partition.core_count} cores, "
      f"{plan.partition.v_groups} per accumulation chain\n")


def execute(program):
    state = load_setup(write_bin(program), write_cfg(plan, program), ifm)
    return run(state, arch, collect_trace=True)


# healthy run: monitor audits the trace
clean = execute(emit_program(plan, "linear"))
stats = check_protocol(clean)
print(f"clean run: {clean.total_cycles} cycles, protocol ok "
      f"({stats.vectors_checked} vectors, {stats.intervals_checked} "
      f"ownership intervals)")
assert np.array_equal(clean.ofm, golden_conv2d(layer, ifm))

# bump a WAIT threshold mid-stream on core 1. The producer's NEXT call
# satisfies it, so the run finishes late but still bit-exact.
delayed = execute(tamper_wait(emit_program(plan, "linear"),
                              core=1, index=3, delta=1))
print(f"\nmid-stream WAIT+1: finished in {delayed.total_cycles} cycles "
      f"(clean took {clean.total_cycles})")
print("output still bit-exact:", np.array_equal(delayed.ofm, clean.ofm))

# bump the LAST wait instead: the required CALL count now exceeds the total
# number of CALLs the producer will ever send. Nothing wrong ever reaches
# memory - the machine just stops, and says why.
try:
    execute(tamper_wait(emit_program(plan, "linear"), core=1, index=-1))
except DeadlockError as exc:
    print("\nlast WAIT+1: DeadlockError")
    for core, status in sorted(exc.core_status.items()):
        print(f"  core {core}: {status}")
