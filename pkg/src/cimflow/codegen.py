"""Instruction-stream generation and the .bin/.cfg artifact formats.

Per (core, output vector) body:

    LOAD input slice (one burst per contiguous run, padded runs from the
    zero page); MVM; then ADDB if this core owns the vector first, else
    WAIT / LOAD partial / ACC; ACT if it owns the vector last; STORE; and
    CALL to the successor unless last. Cores walk vectors in ascending j.

Ownership order per vector j within an HG:

    sequential/linear  vg 0, 1, ..., P_V-1
    cyclic             vg j%P_V, j%P_V+1, ... (mod P_V)

The first owner adds the bias, the last one applies the activation, so each
OFM word is written P_V times but finalized exactly once.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import isa
from .mapping import MappingPlan

SCHEMES = ("sequential", "linear", "cyclic")

BIN_MAGIC = b"CIMB"
BIN_FORMAT_REV = 1
_ALIGN = 16


class CodegenError(Exception):
    pass


class LayoutError(CodegenError):
    pass


class CapacityError(CodegenError):
    pass


class FormatError(CodegenError):
    """Malformed .bin or .cfg input."""


class OverheadUndefinedError(CodegenError):
    """Overhead percentage asked for with zero data traffic."""


def _align(n: int) -> int:
    return (n + _ALIGN - 1) // _ALIGN * _ALIGN


@dataclass(frozen=True)
class MemoryLayout:
    """Byte layout of the shared-memory image. The zero page feeds padded
    input-slice elements; IFM values are 1 byte, OFM words 4 bytes."""

    sections: tuple           # core id -> (offset, length_bytes)
    zeros_offset: int
    zeros_len: int
    ifm_offset: int
    ifm_len_values: int
    ofm_offset: int
    ofm_len_values: int

    @property
    def total_bytes(self) -> int:
        return self.ofm_offset + 4 * self.ofm_len_values


@dataclass(frozen=True)
class Program:
    streams: tuple            # core id -> tuple of instruction tuples
    layout: MemoryLayout
    scheme: str

    @property
    def core_count(self) -> int:
        return len(self.streams)


@dataclass(frozen=True)
class StaticCounts:
    """Traffic totals in values/operations (per-vector CALL/WAIT counts,
    i.e. what actually gets emitted for every scheme)."""

    loads_values: int
    stores_values: int
    calls: int
    waits: int


def _owner_position(scheme: str, vg: int, j: int, v_groups: int) -> int:
    if scheme == "cyclic":
        return (vg - j) % v_groups
    return vg


def count_calls_analytic(scheme: str, h_groups: int, v_groups: int,
                         out_vectors: int) -> int:
    """Closed-form CALL totals. The cyclic form rounds the vector count up to
    a multiple of P_V, so it is an upper bound on the emitted count and tight
    exactly when P_V divides O_V_NUM."""
    if scheme not in SCHEMES:
        raise CodegenError(f"unknown scheme {scheme!r}")
    if min(h_groups, v_groups) < 1 or out_vectors < 0:
        raise CodegenError("group counts must be >= 1 and out_vectors >= 0")
    if scheme == "sequential":
        return 0
    if scheme == "linear":
        return h_groups * out_vectors * (v_groups - 1)
    rounds = -(-out_vectors // v_groups)
    return h_groups * rounds * v_groups * (v_groups - 1)


def count_calls_emitted(program: Program) -> int:
    return sum(1 for s in program.streams for op, *_ in s if op == isa.OP_CALL)


def count_waits_emitted(program: Program) -> int:
    return sum(1 for s in program.streams for op, *_ in s if op == isa.OP_WAIT)


def count_traffic_analytic(plan: MappingPlan, scheme: str = "linear") -> StaticCounts:
    """Loaded/stored value totals (scheme independent) plus per-vector
    CALL/WAIT counts for the scheme."""
    if scheme not in SCHEMES:
        raise CodegenError(f"unknown scheme {scheme!r}")
    p = plan.partition
    o = plan.ofm.out_vectors
    sum_rows = sum(p.row_sizes)
    sum_cols = sum(p.col_sizes)
    loads = o * p.h_groups * sum_cols + (p.v_groups - 1) * o * sum_rows
    stores = p.v_groups * o * sum_rows
    handoffs = 0 if scheme == "sequential" else p.h_groups * o * (p.v_groups - 1)
    return StaticCounts(loads_values=loads, stores_values=stores,
                        calls=handoffs, waits=handoffs)


def call_overhead_percent(counts: StaticCounts, bytes_per_call: int = 4,
                          bytes_per_value: int = 1) -> float:
    """CALL bytes as a percentage of loaded+stored data bytes."""
    data = (counts.loads_values + counts.stores_values) * bytes_per_value
    if data == 0:
        raise OverheadUndefinedError("no data traffic, overhead undefined")
    return 100.0 * counts.calls * bytes_per_call / data


# ----------------------------------------------------------------- emission

def _runs_table(plan: MappingPlan) -> list:
    """runs_table[vg][j] = input_slice_runs for vector j (j = y*O_X + x)."""
    o_x = plan.ofm.o_x
    table = []
    for vg in range(plan.partition.v_groups):
        per_j = []
        for j in range(plan.ofm.out_vectors):
            per_j.append(plan.input_slice_runs(vg, j // o_x, j % o_x))
        table.append(per_j)
    return table


def build_layout(plan: MappingPlan, scheme: str, runs_table=None) -> MemoryLayout:
    if runs_table is None:
        runs_table = _runs_table(plan)
    p = plan.partition
    o = plan.ofm.out_vectors
    counts = []
    for hg in range(p.h_groups):
        for vg in range(p.v_groups):
            n = 1  # HALT
            for j in range(o):
                pos = _owner_position(scheme, vg, j, p.v_groups)
                n += len(runs_table[vg][j]) + 2          # LOADs, MVM, STORE
                if pos == 0:
                    n += 1                               # ADDB
                elif scheme == "sequential":
                    n += 2                               # LOAD partials, ACC
                else:
                    n += 3                               # WAIT, LOAD, ACC
                if pos == p.v_groups - 1:
                    n += 1                               # ACT
                elif scheme != "sequential":
                    n += 1                               # CALL
            counts.append(n)
    header = 8 + 8 * p.core_count + 16
    off = _align(header)
    sections = []
    for n in counts:
        sections.append((off, n * isa.WORD))
        off += n * isa.WORD
    zeros_offset = _align(off)
    zeros_len = _align(max(p.cols, 1))
    ifm_offset = zeros_offset + zeros_len
    iy, ix, iz = plan.layer.input_shape
    ifm_len = iy * ix * iz
    ofm_offset = _align(ifm_offset + ifm_len)
    return MemoryLayout(sections=tuple(sections), zeros_offset=zeros_offset,
                        zeros_len=zeros_len, ifm_offset=ifm_offset,
                        ifm_len_values=ifm_len, ofm_offset=ofm_offset,
                        ofm_len_values=plan.ofm.out_vectors * plan.ofm.o_z)


def emit_program(plan: MappingPlan, scheme: str, layout: MemoryLayout = None) -> Program:
    if scheme not in SCHEMES:
        raise CodegenError(f"unknown scheme {scheme!r}")
    p = plan.partition
    o = plan.ofm.out_vectors
    k_num = plan.ofm.o_z
    runs_table = _runs_table(plan)
    if layout is None:
        layout = build_layout(plan, scheme, runs_table)
    iy, ix, iz = plan.layer.input_shape
    if layout.ifm_len_values < iy * ix * iz:
        raise LayoutError(f"IFM region holds {layout.ifm_len_values} values, "
                          f"layer needs {iy * ix * iz}")
    if layout.ofm_len_values < o * k_num:
        raise LayoutError(f"OFM region holds {layout.ofm_len_values} values, "
                          f"layer needs {o * k_num}")
    if layout.zeros_len < max(p.cols, 1):
        raise LayoutError("zero page smaller than one input slice")
    act_kind = isa.ACT_KINDS[plan.layer.activation]
    streams = [[] for _ in range(p.core_count)]
    wait_seq = [0] * p.core_count
    for hg in range(p.h_groups):
        m_h = p.row_sizes[hg]
        row0 = plan.row_start(hg)
        for vg in range(p.v_groups):
            core = plan.core_id(hg, vg)
            body = streams[core]
            runs_j = runs_table[vg]
            for j in range(o):
                pos = _owner_position(scheme, vg, j, p.v_groups)
                buf = 0
                for kind, start, length in runs_j[j]:
                    addr = layout.zeros_offset if kind == "zero" else layout.ifm_offset + start
                    body.append((isa.OP_LOAD, addr, length, buf))
                    buf += length
                body.append((isa.OP_MVM, 0, 0, 0))
                part_addr = layout.ofm_offset + 4 * (j * k_num + row0)
                if pos == 0:
                    body.append((isa.OP_ADDB, 0, 0, 0))
                else:
                    if scheme != "sequential":
                        # ordering comes from the driver under sequential;
                        # otherwise gate on the producer's k-th CALL
                        wait_seq[core] += 1
                        body.append((isa.OP_WAIT, wait_seq[core], 0, 0))
                    body.append((isa.OP_LOAD, part_addr, m_h, 0))
                    body.append((isa.OP_ACC, 0, 0, 0))
                last = pos == p.v_groups - 1
                if last:
                    body.append((isa.OP_ACT, act_kind, 0, 0))
                body.append((isa.OP_STORE, part_addr, m_h, 0))
                if not last and scheme != "sequential":
                    succ = vg + 1 if scheme == "linear" else (vg + 1) % p.v_groups
                    body.append((isa.OP_CALL, plan.core_id(hg, succ), 0, 0))
            body.append((isa.OP_HALT, 0, 0, 0))
    for core, s in enumerate(streams):
        need = len(s) * isa.WORD
        if need > layout.sections[core][1]:
            raise LayoutError(f"core {core}: section holds "
                              f"{layout.sections[core][1]} bytes, needs {need}")
    return Program(streams=tuple(tuple(s) for s in streams), layout=layout,
                   scheme=scheme)


def tamper_wait(program: Program, core: int = None, index: int = 0,
                delta: int = 1) -> Program:
    """Raise one WAIT threshold by delta (fault injection). Raising can only
    stall the consumer, so a corrupted run either finishes late or deadlocks;
    it can never produce a wrong OFM. A core receives exactly as many CALLs
    as it has WAITs, so bumping the last WAIT (index=-1) is a guaranteed
    hang; earlier ones may just run late (cyclic rings can also starve
    outright, since there the producer needs the stalled consumer's CALLs
    to make progress)."""
    if delta < 1:
        raise CodegenError("tamper_wait only raises thresholds (delta >= 1)")
    cores = range(program.core_count) if core is None else (core,)
    for c in cores:
        spots = [i for i, instr in enumerate(program.streams[c])
                 if instr[0] == isa.OP_WAIT]
        if not spots or index >= len(spots) or index < -len(spots):
            continue
        i = spots[index]
        instr = program.streams[c][i]
        stream = list(program.streams[c])
        stream[i] = (isa.OP_WAIT, instr[1] + delta, 0, 0)
        streams = list(program.streams)
        streams[c] = tuple(stream)
        return replace(program, streams=tuple(streams))
    raise CodegenError("no WAIT instruction to tamper with")


# ------------------------------------------------------------------ bin file

_SCHEME_ID = {s: i for i, s in enumerate(SCHEMES)}


def write_bin(program: Program, max_bytes: int = None) -> bytes:
    lay = program.layout
    total = lay.total_bytes
    if max_bytes is not None and total > max_bytes:
        raise CapacityError(f"image needs {total} bytes, shared memory "
                            f"holds {max_bytes}")
    img = bytearray(total)
    img[0:4] = BIN_MAGIC
    version = BIN_FORMAT_REV | _SCHEME_ID[program.scheme] << 8
    struct.pack_into("<HH", img, 4, version, program.core_count)
    for core, (off, length) in enumerate(lay.sections):
        struct.pack_into("<II", img, 8 + 8 * core, off, length)
        code = isa.encode_stream(program.streams[core])
        if len(code) != length:
            raise LayoutError(f"core {core}: stream is {len(code)} bytes, "
                              f"section says {length}")
        img[off:off + length] = code
    struct.pack_into("<IIII", img, 8 + 8 * program.core_count,
                     lay.ifm_offset, lay.ifm_len_values,
                     lay.ofm_offset, lay.ofm_len_values)
    return bytes(img)


def read_bin(data: bytes) -> Program:
    if len(data) < 24 or data[0:4] != BIN_MAGIC:
        raise FormatError("not a CIMB image")
    version, core_count = struct.unpack_from("<HH", data, 4)
    if version & 0xFF != BIN_FORMAT_REV:
        raise FormatError(f"unsupported format revision {version & 0xFF}")
    scheme_id = version >> 8
    if scheme_id >= len(SCHEMES):
        raise FormatError(f"unknown scheme id {scheme_id}")
    sections = []
    for core in range(core_count):
        off, length = struct.unpack_from("<II", data, 8 + 8 * core)
        if off + length > len(data):
            raise FormatError(f"core {core}: section [{off}:{off + length}] "
                              "outside image")
        sections.append((off, length))
    ifm_off, ifm_len, ofm_off, ofm_len = struct.unpack_from(
        "<IIII", data, 8 + 8 * core_count)
    if ofm_off + 4 * ofm_len != len(data):
        raise FormatError("image size does not match OFM region")
    streams = tuple(isa.decode_stream(data[off:off + length])
                    for off, length in sections)
    sec_end = max((off + length for off, length in sections), default=24)
    zeros_offset = _align(sec_end)
    layout = MemoryLayout(sections=tuple(sections), zeros_offset=zeros_offset,
                          zeros_len=ifm_off - zeros_offset, ifm_offset=ifm_off,
                          ifm_len_values=ifm_len, ofm_offset=ofm_off,
                          ofm_len_values=ofm_len)
    return Program(streams=streams, layout=layout, scheme=SCHEMES[scheme_id])


# ------------------------------------------------------------------ cfg file

@dataclass(frozen=True)
class CoreCfg:
    core_id: int
    hg: int
    vg: int
    rows: int
    cols: int
    instr_offset: int
    weights: np.ndarray = field(repr=False, compare=False)  # int8 (rows, cols)
    biases: np.ndarray = field(repr=False, compare=False)   # int32 (rows,)


@dataclass(frozen=True)
class CfgImage:
    scheme: str
    core_count: int
    ofm_dims: tuple  # (O_Y, O_X, K_NUM)
    cores: tuple


def write_cfg(plan: MappingPlan, program: Program) -> str:
    p = plan.partition
    out = [
        f"cimcfg {BIN_FORMAT_REV}",
        f"scheme {program.scheme}",
        f"cores {p.core_count}",
        f"ofm {plan.ofm.o_y} {plan.ofm.o_x} {plan.ofm.o_z}",
    ]
    for hg in range(p.h_groups):
        for vg in range(p.v_groups):
            core = plan.core_id(hg, vg)
            tile = plan.tiles[(hg, vg)]
            out += [f"core {core}", f"hg {hg}", f"vg {vg}",
                    f"rows {tile.shape[0]}", f"cols {tile.shape[1]}",
                    f"instr_offset {program.layout.sections[core][0]}",
                    "weights"]
            out += [" ".join(str(v) for v in row) for row in tile.tolist()]
            out.append("biases")
            out.append(" ".join(str(v) for v in plan.bias_slices[hg].tolist()))
    out.append("")
    return "\n".join(out)


def read_cfg(text: str) -> CfgImage:
    lines = [ln.split("#", 1)[0].strip() for ln in text.splitlines()]
    lines = [(i + 1, ln) for i, ln in enumerate(lines) if ln]
    pos = 0

    def take():
        nonlocal pos
        if pos >= len(lines):
            raise FormatError("unexpected end of cfg")
        pos += 1
        return lines[pos - 1]

    def expect(key, n_vals=1):
        lineno, ln = take()
        toks = ln.split()
        if toks[0] != key or len(toks) != 1 + n_vals:
            raise FormatError(f"cfg line {lineno}: expected '{key}', got {ln!r}")
        try:
            vals = [int(t) for t in toks[1:]]
        except ValueError:
            raise FormatError(f"cfg line {lineno}: bad integer") from None
        return vals[0] if n_vals == 1 else tuple(vals)

    if expect("cimcfg") != BIN_FORMAT_REV:
        raise FormatError("unsupported cfg revision")
    lineno, ln = take()
    if not ln.startswith("scheme ") or ln.split()[1] not in SCHEMES:
        raise FormatError(f"cfg line {lineno}: bad scheme line {ln!r}")
    scheme = ln.split()[1]
    core_count = expect("cores")
    ofm_dims = expect("ofm", 3)
    cores = []
    for _ in range(core_count):
        cid = expect("core")
        hg, vg = expect("hg"), expect("vg")
        rows, cols = expect("rows"), expect("cols")
        instr_offset = expect("instr_offset")
        lineno, ln = take()
        if ln != "weights":
            raise FormatError(f"cfg line {lineno}: expected 'weights'")
        w = np.zeros((rows, cols), dtype=np.int8)
        for r in range(rows):
            lineno, ln = take()
            vals = ln.split()
            if len(vals) != cols:
                raise FormatError(f"cfg line {lineno}: expected {cols} weights")
            w[r] = [int(v) for v in vals]
        lineno, ln = take()
        if ln != "biases":
            raise FormatError(f"cfg line {lineno}: expected 'biases'")
        lineno, ln = take()
        bvals = ln.split()
        if len(bvals) != rows:
            raise FormatError(f"cfg line {lineno}: expected {rows} biases")
        cores.append(CoreCfg(core_id=cid, hg=hg, vg=vg, rows=rows, cols=cols,
                             instr_offset=instr_offset, weights=w,
                             biases=np.array([int(v) for v in bvals],
                                             dtype=np.int32)))
    if pos != len(lines):
        raise FormatError(f"cfg line {lines[pos][0]}: trailing content")
    if [c.core_id for c in cores] != list(range(core_count)):
        raise FormatError("cfg core blocks must be 0..N-1 in order")
    return CfgImage(scheme=scheme, core_count=core_count, ofm_dims=ofm_dims,
                    cores=tuple(cores))
