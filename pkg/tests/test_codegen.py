"""Schedule shape, count formulas, and the .bin/.cfg artifact round-trips.

The hand-checked layer used throughout: kernel (1,1,6,3), input (1,2,6) on a
4x4 crossbar -> one HG of 3 rows, two VGs of 4+2 columns, 2 output vectors.
"""

import numpy as np
import pytest

from cimflow import isa
from cimflow.codegen import (CapacityError, CodegenError, FormatError,
                             LayoutError, build_layout, count_calls_analytic,
                             count_calls_emitted, count_traffic_analytic,
                             count_waits_emitted, emit_program, read_bin,
                             read_cfg, tamper_wait, write_bin, write_cfg)
from cimflow.mapping import build_mapping_plan
from cimflow.model import LayerSpec


def make_layer(kernel=(1, 1, 6, 3), inp=(1, 2, 6), seed=0, **kw):
    rng = np.random.default_rng(seed)
    kw.setdefault("activation", "relu")
    return LayerSpec(name="hand", kind="conv2d", kernel_shape=kernel,
                     input_shape=inp,
                     weights=rng.integers(-128, 128, size=kernel).astype(np.int8),
                     biases=rng.integers(-100, 100, size=kernel[3]).astype(np.int32),
                     **kw)


def hand_plan():
    return build_mapping_plan(make_layer(), 4, 4)


def ops(stream):
    return [isa.NAMES[i[0]] for i in stream]


# ---------------------------------------------------------- hand schedules

def test_linear_schedule_by_hand():
    plan = hand_plan()
    prog = emit_program(plan, "linear")
    lay = prog.layout
    assert lay.ifm_offset == 480 and lay.ofm_offset == 496

    first = ["LOAD", "MVM", "ADDB", "STORE", "CALL"]
    last = ["LOAD", "MVM", "WAIT", "LOAD", "ACC", "ACT", "STORE"]
    assert ops(prog.streams[0]) == first * 2 + ["HALT"]
    assert ops(prog.streams[1]) == last * 2 + ["HALT"]

    # vg0 loads ifm[0, x, 0:4] -> flat x*6; vg1 gets the 2-column remainder
    assert prog.streams[0][0] == (isa.OP_LOAD, 480, 4, 0)
    assert prog.streams[0][5] == (isa.OP_LOAD, 486, 4, 0)
    assert prog.streams[1][0] == (isa.OP_LOAD, 484, 2, 0)
    assert prog.streams[1][7] == (isa.OP_LOAD, 490, 2, 0)
    # handoff goes to the next vg; thresholds count received CALLs
    assert prog.streams[0][4] == (isa.OP_CALL, 1, 0, 0)
    assert prog.streams[1][2] == (isa.OP_WAIT, 1, 0, 0)
    assert prog.streams[1][9] == (isa.OP_WAIT, 2, 0, 0)
    # vector j lands at ofm_offset + 4*j*K_NUM
    assert prog.streams[0][3] == (isa.OP_STORE, 496, 3, 0)
    assert prog.streams[0][8] == (isa.OP_STORE, 508, 3, 0)
    assert prog.streams[1][3] == (isa.OP_LOAD, 496, 3, 0)   # partial read-back


def test_cyclic_schedule_rotates_ownership():
    prog = emit_program(hand_plan(), "cyclic")
    first = ["LOAD", "MVM", "ADDB", "STORE", "CALL"]
    last = ["LOAD", "MVM", "WAIT", "LOAD", "ACC", "ACT", "STORE"]
    assert ops(prog.streams[0]) == first + last + ["HALT"]
    assert ops(prog.streams[1]) == last + first + ["HALT"]
    # the ring wraps: vg1 calls vg0
    assert prog.streams[1][-2] == (isa.OP_CALL, 0, 0, 0)


def test_sequential_schedule_has_no_handshakes():
    prog = emit_program(hand_plan(), "sequential")
    assert ops(prog.streams[0]) == ["LOAD", "MVM", "ADDB", "STORE"] * 2 + ["HALT"]
    assert ops(prog.streams[1]) == \
        ["LOAD", "MVM", "LOAD", "ACC", "ACT", "STORE"] * 2 + ["HALT"]
    assert count_calls_emitted(prog) == count_waits_emitted(prog) == 0


def test_wait_thresholds_ascend_per_core():
    layer = make_layer((1, 1, 9, 2), (2, 5, 9))  # P_V=3, O=10 on 4x3
    plan = build_mapping_plan(layer, 4, 3)
    for scheme in ("linear", "cyclic"):
        prog = emit_program(plan, scheme)
        for stream in prog.streams:
            waits = [i[1] for i in stream if i[0] == isa.OP_WAIT]
            assert waits == list(range(1, len(waits) + 1))


def test_cyclic_spreads_bias_and_activation_fairly():
    layer = make_layer((1, 1, 9, 2), (2, 5, 9))  # P_V=3, O=10
    plan = build_mapping_plan(layer, 4, 3)
    prog = emit_program(plan, "cyclic")
    addb = [sum(1 for i in s if i[0] == isa.OP_ADDB) for s in prog.streams]
    act = [sum(1 for i in s if i[0] == isa.OP_ACT) for s in prog.streams]
    assert addb == [4, 3, 3] and act == [3, 3, 4]
    lin = emit_program(plan, "linear")
    assert [sum(1 for i in s if i[0] == isa.OP_ADDB) for s in lin.streams] == [10, 0, 0]
    assert [sum(1 for i in s if i[0] == isa.OP_ACT) for s in lin.streams] == [0, 0, 10]


# ------------------------------------------------------------------ counts

def test_call_count_formulas():
    layer = make_layer((1, 1, 9, 2), (2, 5, 9))  # P_V=3, O=10
    plan = build_mapping_plan(layer, 4, 3)
    assert count_calls_analytic("sequential", 1, 3, 10) == 0
    assert count_calls_analytic("linear", 1, 3, 10) == 20
    # ceiling form: upper bound, tight only when P_V | O
    assert count_calls_analytic("cyclic", 1, 3, 10) == 24
    assert count_calls_analytic("cyclic", 1, 3, 9) == 18
    for scheme, want in (("sequential", 0), ("linear", 20), ("cyclic", 20)):
        prog = emit_program(plan, scheme)
        assert count_calls_emitted(prog) == want
        assert count_waits_emitted(prog) == want
    with pytest.raises(CodegenError):
        count_calls_analytic("ring", 1, 3, 10)


def test_traffic_formula_by_hand():
    plan = hand_plan()  # P_V=2, P_H=1, O=2, K=6, K_NUM=3
    c = count_traffic_analytic(plan, "linear")
    assert c.loads_values == 2 * 1 * 6 + 1 * 2 * 3 == 18
    assert c.stores_values == 2 * 2 * 3 == 12
    assert c.calls == c.waits == 2
    assert count_traffic_analytic(plan, "sequential").calls == 0
    # loads/stores do not depend on the scheme
    for scheme in ("sequential", "linear", "cyclic"):
        k = count_traffic_analytic(plan, scheme)
        assert (k.loads_values, k.stores_values) == (18, 12)


# --------------------------------------------------------------- artifacts

@pytest.mark.parametrize("scheme", ["sequential", "linear", "cyclic"])
def test_bin_round_trip(scheme):
    plan = hand_plan()
    prog = emit_program(plan, scheme)
    data = write_bin(prog)
    assert data[0:4] == b"CIMB"
    assert len(data) == prog.layout.total_bytes
    back = read_bin(data)
    assert back == prog


def test_bin_rejects_corruption():
    data = write_bin(emit_program(hand_plan(), "linear"))
    with pytest.raises(FormatError):
        read_bin(b"NOPE" + data[4:])
    with pytest.raises(FormatError):
        read_bin(data[:20])
    bad_rev = bytearray(data)
    bad_rev[4] = 9
    with pytest.raises(FormatError):
        read_bin(bytes(bad_rev))
    bad_scheme = bytearray(data)
    bad_scheme[5] = 7
    with pytest.raises(FormatError):
        read_bin(bytes(bad_scheme))
    with pytest.raises(FormatError):
        read_bin(data + b"\0")     # size no longer matches the OFM region


def test_bin_capacity_check():
    prog = emit_program(hand_plan(), "linear")
    with pytest.raises(CapacityError):
        write_bin(prog, max_bytes=64)


def test_cfg_round_trip():
    plan = hand_plan()
    prog = emit_program(plan, "cyclic")
    img = read_cfg(write_cfg(plan, prog))
    assert img.scheme == "cyclic"
    assert img.core_count == 2
    assert img.ofm_dims == (1, 2, 3)
    for core in img.cores:
        assert (core.hg, core.vg) == divmod(core.core_id, 2)
        assert core.instr_offset == prog.layout.sections[core.core_id][0]
        assert np.array_equal(core.weights, plan.tiles[(core.hg, core.vg)])
        assert np.array_equal(core.biases, plan.bias_slices[core.hg])


def test_cfg_rejects_corruption():
    plan = hand_plan()
    text = write_cfg(plan, emit_program(plan, "linear"))
    with pytest.raises(FormatError):
        read_cfg(text.replace("cimcfg 1", "cimcfg 2"))
    with pytest.raises(FormatError):
        read_cfg(text.replace("scheme linear", "scheme zigzag"))
    with pytest.raises(FormatError):
        read_cfg(text + "stray\n")
    # drop one weight row
    lines = text.splitlines()
    w = lines.index("weights")
    with pytest.raises(FormatError):
        read_cfg("\n".join(lines[:w + 1] + lines[w + 2:]))


def test_layout_precount_is_exact():
    # every section is exactly as large as its emitted stream, all schemes
    for kernel, inp, m, n in [((1, 1, 6, 3), (1, 2, 6), 4, 4),
                              ((3, 3, 5, 9), (6, 7, 5), 4, 8),
                              ((2, 2, 4, 4), (5, 5, 4), 2, 6)]:
        plan = build_mapping_plan(make_layer(kernel, inp, padding="same"), m, n)
        for scheme in ("sequential", "linear", "cyclic"):
            prog = emit_program(plan, scheme)
            for cid, stream in enumerate(prog.streams):
                assert len(stream) * isa.WORD == prog.layout.sections[cid][1]


def test_tamper_wait():
    plan = hand_plan()
    prog = emit_program(plan, "linear")
    bad = tamper_wait(prog, core=1, index=0, delta=2)
    assert bad.streams[1][2] == (isa.OP_WAIT, 3, 0, 0)
    assert prog.streams[1][2] == (isa.OP_WAIT, 1, 0, 0)  # original untouched
    last = tamper_wait(prog, core=1, index=-1)
    assert last.streams[1][9] == (isa.OP_WAIT, 3, 0, 0)
    with pytest.raises(CodegenError):
        tamper_wait(prog, delta=0)
    with pytest.raises(CodegenError):
        tamper_wait(emit_program(plan, "sequential"))   # nothing to tamper


def test_emit_rejects_undersized_layout():
    from dataclasses import replace
    plan = hand_plan()
    lay = build_layout(plan, "linear")
    shrunk = replace(lay, sections=((lay.sections[0][0], 16), lay.sections[1]))
    with pytest.raises(LayoutError):
        emit_program(plan, "linear", layout=shrunk)
