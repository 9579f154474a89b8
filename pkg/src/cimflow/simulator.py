"""Cycle-accurate discrete-event simulator for the multi-core CIM machine.

Cores interpret their instruction streams sequentially. Local work (MVM,
ACC, ADDB, ACT) advances only the core's own clock; LOAD/STORE/CALL go
through one shared arbitrated bus and block the issuing core until the
transaction completes (+ t_mem for memory ops). A transaction holds the bus
for t_bus_overhead + ceil(payload_bytes / bus_width_bytes) cycles; grants
are round-robin over requesting cores with ties broken by ascending id.

Synchronization: every core owns a SEQ_NR register (u32, starts at 0). A
CALL increments the target's SEQ_NR at the cycle its bus transaction
completes; WAIT blocks until the local SEQ_NR reaches its threshold and
consumes no bus bandwidth. Under the sequential scheme the driver releases
the cores of each HG in vg order, each after its predecessor HALTs; HGs of
one layer always run concurrently.

Everything is deterministic: events are processed in (cycle, phase, core)
order, so repeated runs produce identical reports.
"""

from __future__ import annotations

import hashlib
import heapq
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from . import isa
from .codegen import (CapacityError, CfgImage, FormatError, Program, SCHEMES,
                      StaticCounts, read_bin, read_cfg)


class SimError(Exception):
    pass


class ConfigError(SimError):
    pass


class ConsistencyError(SimError):
    """bin/cfg/ifm/arch disagree about the machine being simulated."""


class DeadlockError(SimError):
    def __init__(self, msg, core_status):
        super().__init__(msg)
        self.core_status = core_status  # core id -> human-readable state


class SpeedupBoundError(SimError):
    pass


@dataclass
class ArchConfig:
    """Machine parameters. Byte-per-value knobs follow the traffic accounting
    convention (1 B per data value, 4 B per CALL); OFM words are still int32
    functionally. `scheme` is what the compile/sweep side targets - a run is
    always driven by the scheme recorded in the cfg."""

    rows: int = 64                 # crossbar M
    cols: int = 64                 # crossbar N
    bus_width_bytes: int = 16
    shared_mem_bytes: int = 1 << 26
    scheme: str = "linear"
    t_mvm: int = 32768             # cycles per crossbar MVM
    t_gpeu_per_elem: int = 1       # cycles/element for ACC/ADDB/ACT
    t_bus_overhead: int = 2        # fixed cycles per bus transaction
    t_mem: int = 1                 # memory turnaround after a transaction
    bytes_per_value_ifm: int = 1
    bytes_per_value_ofm: int = 1
    bytes_per_call: int = 4
    charge_fetch_traffic: bool = False  # bill a 16 B bus txn per instruction

    def validate(self):
        if self.rows < 1 or self.cols < 1:
            raise ConfigError(f"crossbar dims must be positive, got "
                              f"{self.rows}x{self.cols}")
        if self.bus_width_bytes < 1:
            raise ConfigError("bus_width_bytes must be positive")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        for name in ("t_mvm", "t_gpeu_per_elem", "t_bus_overhead", "t_mem"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        for name in ("bytes_per_value_ifm", "bytes_per_value_ofm",
                     "bytes_per_call", "shared_mem_bytes"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")


_ARCH_INT_KEYS = ("rows", "cols", "bus_width_bytes", "shared_mem_bytes",
                  "t_mvm", "t_gpeu_per_elem", "t_bus_overhead", "t_mem",
                  "bytes_per_value_ifm", "bytes_per_value_ofm",
                  "bytes_per_call")


def parse_arch(text: str) -> ArchConfig:
    """key = value per line, '#' comments. Unknown keys are errors."""
    arch = ArchConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"arch line {lineno}: expected key = value")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in _ARCH_INT_KEYS:
            try:
                setattr(arch, key, int(value))
            except ValueError:
                raise ConfigError(f"arch line {lineno}: bad integer for {key}") from None
        elif key == "scheme":
            arch.scheme = value
        elif key == "charge_fetch_traffic":
            arch.charge_fetch_traffic = value.lower() in ("1", "true", "yes")
        else:
            raise ConfigError(f"arch line {lineno}: unknown key {key!r}")
    arch.validate()
    return arch


def format_arch(arch: ArchConfig) -> str:
    lines = [f"{k} = {getattr(arch, k)}" for k in _ARCH_INT_KEYS]
    lines.insert(4, f"scheme = {arch.scheme}")
    lines.append(f"charge_fetch_traffic = {int(arch.charge_fetch_traffic)}")
    return "\n".join(lines) + "\n"


# -------------------------------------------------------------- setup phase

class MachineState:
    """Immutable-after-setup description shared by any number of runs."""

    def __init__(self, program: Program, cfg: CfgImage, ifm_flat: np.ndarray):
        self.program = program
        self.cfg = cfg
        self.ifm_flat = ifm_flat  # int32 copy of the int8 IFM values
        self.v_groups = max(c.vg for c in cfg.cores) + 1
        self.h_groups = max(c.hg for c in cfg.cores) + 1
        self.k_num = cfg.ofm_dims[2]
        self.out_vectors = cfg.ofm_dims[0] * cfg.ofm_dims[1]


def load_setup(bin_data: bytes, cfg_text: str, ifm: np.ndarray) -> MachineState:
    """Parse the two artifacts, cross-check them, place the IFM. Functional
    only - setup costs no cycles and no counted traffic."""
    program = read_bin(bin_data)
    cfg = read_cfg(cfg_text)
    if cfg.core_count != program.core_count:
        raise ConsistencyError(f"cfg has {cfg.core_count} cores, "
                               f"bin has {program.core_count}")
    if cfg.scheme != program.scheme:
        raise ConsistencyError(f"cfg scheme {cfg.scheme!r} != bin scheme "
                               f"{program.scheme!r}")
    v_groups = max(c.vg for c in cfg.cores) + 1
    h_groups = max(c.hg for c in cfg.cores) + 1
    if v_groups * h_groups != cfg.core_count:
        raise ConsistencyError("cfg group ids do not form a full grid")
    rows_by_hg, cols_by_vg = {}, {}
    for c in cfg.cores:
        if c.core_id != c.hg * v_groups + c.vg:
            raise ConsistencyError(f"core {c.core_id}: id does not match "
                                   f"hg*P_V+vg = {c.hg * v_groups + c.vg}")
        if c.instr_offset != program.layout.sections[c.core_id][0]:
            raise ConsistencyError(f"core {c.core_id}: cfg instr_offset "
                                   f"{c.instr_offset} != bin section start "
                                   f"{program.layout.sections[c.core_id][0]}")
        if rows_by_hg.setdefault(c.hg, c.rows) != c.rows:
            raise ConsistencyError(f"hg {c.hg}: inconsistent tile row counts")
        if cols_by_vg.setdefault(c.vg, c.cols) != c.cols:
            raise ConsistencyError(f"vg {c.vg}: inconsistent tile col counts")
    oy, ox, oz = cfg.ofm_dims
    if oy * ox * oz != program.layout.ofm_len_values:
        raise ConsistencyError(f"cfg OFM {oy}x{ox}x{oz} != bin OFM region of "
                               f"{program.layout.ofm_len_values} values")
    if sum(rows_by_hg.values()) != oz:
        raise ConsistencyError("per-HG tile rows do not sum to K_NUM")
    ifm = np.asarray(ifm, dtype=np.int8).reshape(-1)
    if ifm.size != program.layout.ifm_len_values:
        raise ConsistencyError(f"IFM has {ifm.size} values, bin region holds "
                               f"{program.layout.ifm_len_values}")
    return MachineState(program, cfg, ifm.astype(np.int32))


# ------------------------------------------------------------------- report

@dataclass
class SimReport:
    scheme: str
    core_count: int
    v_groups: int
    h_groups: int
    out_vectors: int
    k_num: int
    ofm_offset: int
    total_cycles: int
    completed: bool
    counts: StaticCounts                  # aggregate counted traffic
    per_core: dict                        # name -> list per core
    cores_meta: tuple                     # (hg, vg, rows, row_start) per core
    ofm: np.ndarray = field(repr=False)   # int32 (O_Y, O_X, K_NUM)
    trace: tuple = None                   # (cycle, core, event, addr, len)


def report_to_json(report: SimReport) -> str:
    """Stable-order JSON; the OFM tensor is digested, not inlined."""
    ofm = np.ascontiguousarray(report.ofm, dtype="<i4")
    doc = {
        "scheme": report.scheme,
        "core_count": report.core_count,
        "v_groups": report.v_groups,
        "h_groups": report.h_groups,
        "out_vectors": report.out_vectors,
        "k_num": report.k_num,
        "total_cycles": report.total_cycles,
        "completed": report.completed,
        "counts": asdict(report.counts),
        "per_core": {k: list(v) for k, v in sorted(report.per_core.items())},
        "ofm_shape": list(ofm.shape),
        "ofm_sha256": hashlib.sha256(ofm.tobytes()).hexdigest(),
    }
    return json.dumps(doc, indent=2) + "\n"


def trace_to_csv(trace) -> str:
    lines = ["cycle,core,event,address,length"]
    lines += [f"{c},{core},{ev},{addr},{length}" for c, core, ev, addr, length in trace]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------- execution

# core states
_READY, _BUS, _WAITING, _HALTED, _UNRELEASED = range(5)
_STATUS_NAMES = {_READY: "ready", _BUS: "bus-blocked", _WAITING: "waiting",
                 _HALTED: "halted", _UNRELEASED: "not released"}

# event phases: bus completions strictly before core steps before arbitration
_PH_COMPLETE, _PH_EXEC, _PH_ARB = 0, 1, 2


class _Core:
    __slots__ = ("cid", "hg", "vg", "stream", "pc", "time", "status", "seq_nr",
                 "wait_thr", "wait_since", "tile", "bias", "rows", "cols",
                 "row_start", "in_buf", "partial", "acc", "loads", "stores",
                 "calls", "waits", "stall_bus", "stall_wait", "fetched",
                 "halt_time")

    def __init__(self, cid, hg, vg, tile, bias, row_start):
        self.cid = cid
        self.hg = hg
        self.vg = vg
        self.tile = tile                       # int32 (rows, cols)
        self.bias = bias                       # int32 (rows,)
        self.rows, self.cols = tile.shape
        self.row_start = row_start
        self.pc = 0
        self.time = 0
        self.status = _READY
        self.seq_nr = 0
        self.wait_thr = 0
        self.wait_since = 0
        self.in_buf = np.zeros(self.cols, dtype=np.int32)
        self.partial = np.zeros(self.rows, dtype=np.int32)
        self.acc = np.zeros(self.rows, dtype=np.int32)
        self.loads = self.stores = self.calls = self.waits = 0
        self.stall_bus = self.stall_wait = 0
        self.fetched = False
        self.halt_time = None


def _leaky(acc):
    return np.where(acc < 0, acc >> 3, acc)


def run(state: MachineState, arch: ArchConfig, collect_trace: bool = False) -> SimReport:
    """Execute one full layer. The state is not mutated; repeated runs with
    the same arguments return identical reports."""
    arch.validate()
    lay = state.program.layout
    if lay.total_bytes > arch.shared_mem_bytes:
        raise CapacityError(f"image needs {lay.total_bytes} bytes, arch "
                            f"shared memory holds {arch.shared_mem_bytes}")
    scheme = state.cfg.scheme
    row_start = {}
    acc_rows = 0
    for hg in range(state.h_groups):
        row_start[hg] = acc_rows
        acc_rows += state.cfg.cores[hg * state.v_groups].rows
    cores = []
    for c in state.cfg.cores:
        if c.rows > arch.rows or c.cols > arch.cols:
            raise ConsistencyError(f"core {c.core_id}: tile {c.rows}x{c.cols} "
                                   f"exceeds crossbar {arch.rows}x{arch.cols}")
        cores.append(_Core(c.core_id, c.hg, c.vg, c.weights.astype(np.int32),
                           c.biases.astype(np.int32), row_start[c.hg]))
    streams = state.program.streams
    ifm = state.ifm_flat
    ofm = np.zeros(lay.ofm_len_values, dtype=np.int32)
    ifm_off, ofm_off = lay.ifm_offset, lay.ofm_offset
    n_cores = len(cores)
    act_fns = {isa.ACT_NONE: lambda a: a,
               isa.ACT_RELU: lambda a: np.maximum(a, np.int32(0)),
               isa.ACT_LEAKY: _leaky}

    t_mvm, t_gpeu = arch.t_mvm, arch.t_gpeu_per_elem
    t_bus, t_mem = arch.t_bus_overhead, arch.t_mem
    bus_w = arch.bus_width_bytes
    charge_fetch = arch.charge_fetch_traffic

    heap = []
    seq = 0

    def push(time, phase, key, kind, arg):
        nonlocal seq
        seq += 1
        heapq.heappush(heap, (time, phase, key, seq, kind, arg))

    # bus: single resource, round-robin pointer, <=1 outstanding txn per core
    bus_busy_until = 0
    rr_next = 0
    pending = {}  # core id -> (req_time, kind, payload_bytes, args)
    trace = [] if collect_trace else None
    halted = 0

    def submit(core, kind, payload, args, now):
        pending[core.cid] = (now, kind, payload, args)
        core.status = _BUS
        push(now, _PH_ARB, core.cid, "arb", None)

    def release_successor(core, now):
        # sequential driver: next vg of the same HG starts when we halt
        if scheme != "sequential" or core.vg + 1 >= state.v_groups:
            return
        succ = cores[core.cid + 1]
        succ.time = now
        succ.status = _READY
        push(now, _PH_EXEC, succ.cid, "exec", succ.cid)

    def step(core, now):
        """Interpret from core.pc; returns when the core blocks or halts.
        Purely local ops run ahead on the core's own clock; anything touching
        shared state is re-synchronized onto the global event order first."""
        nonlocal halted
        stream = streams[core.cid]
        while True:
            if charge_fetch and not core.fetched:
                if core.time > now:
                    push(core.time, _PH_EXEC, core.cid, "exec", core.cid)
                    return
                submit(core, "fetch", isa.WORD, None, now)
                return
            op, a, b, c = stream[core.pc]
            if op == isa.OP_MVM:
                core.acc = core.tile @ core.in_buf
                core.time += t_mvm
                core.pc += 1
                core.fetched = False
                continue
            if op == isa.OP_ACC:
                core.acc += core.partial
                core.time += t_gpeu * core.rows
                core.pc += 1
                core.fetched = False
                continue
            if op == isa.OP_ADDB:
                core.acc += core.bias
                core.time += t_gpeu * core.rows
                core.pc += 1
                core.fetched = False
                continue
            if op == isa.OP_ACT:
                core.acc = act_fns[a](core.acc)
                core.time += t_gpeu * core.rows
                core.pc += 1
                core.fetched = False
                continue
            # shared-state ops wait for their exact cycle
            if core.time > now:
                push(core.time, _PH_EXEC, core.cid, "exec", core.cid)
                return
            if op == isa.OP_LOAD:
                payload = b * (arch.bytes_per_value_ofm if a >= ofm_off
                               else arch.bytes_per_value_ifm)
                submit(core, "load", payload, (a, b, c), now)
                return
            if op == isa.OP_STORE:
                payload = b * arch.bytes_per_value_ofm
                submit(core, "store", payload, (a, b, c), now)
                return
            if op == isa.OP_CALL:
                submit(core, "call", arch.bytes_per_call, a, now)
                return
            if op == isa.OP_WAIT:
                core.waits += 1
                if core.seq_nr >= a:
                    core.pc += 1
                    core.fetched = False
                    continue
                core.status = _WAITING
                core.wait_thr = a
                core.wait_since = now
                if trace is not None:
                    trace.append((now, core.cid, "wait", a, 0))
                return
            if op == isa.OP_HALT:
                core.status = _HALTED
                core.halt_time = now
                halted += 1
                if trace is not None:
                    trace.append((now, core.cid, "halt", 0, 0))
                release_successor(core, now)
                return
            raise SimError(f"core {core.cid} pc {core.pc}: bad opcode {op}")

    def finish_txn(core, kind, args, now):
        """Apply a completed bus transaction's effect at cycle `now`."""
        if kind == "load":
            addr, length, boff = args
            if addr >= ofm_off:
                idx, rem = divmod(addr - ofm_off, 4)
                if rem or idx + length > ofm.size:
                    raise SimError(f"core {core.cid}: bad OFM load @{addr}")
                core.partial[boff:boff + length] = ofm[idx:idx + length]
            elif addr >= ifm_off:
                idx = addr - ifm_off
                if idx + length > ifm.size or boff + length > core.in_buf.size:
                    raise SimError(f"core {core.cid}: bad IFM load @{addr}")
                core.in_buf[boff:boff + length] = ifm[idx:idx + length]
            else:
                if addr < lay.zeros_offset or boff + length > core.in_buf.size:
                    raise SimError(f"core {core.cid}: bad zero-page load @{addr}")
                core.in_buf[boff:boff + length] = 0
            core.loads += length
            if trace is not None:
                trace.append((now, core.cid, "load", addr, length))
            resume = now + t_mem
        elif kind == "store":
            addr, length, boff = args
            idx, rem = divmod(addr - ofm_off, 4)
            if addr < ofm_off or rem or idx + length > ofm.size:
                raise SimError(f"core {core.cid}: bad OFM store @{addr}")
            ofm[idx:idx + length] = core.acc[boff:boff + length]
            core.stores += length
            if trace is not None:
                trace.append((now, core.cid, "store", addr, length))
            resume = now + t_mem
        elif kind == "call":
            target = cores[args]
            target.seq_nr += 1
            core.calls += 1
            if trace is not None:
                trace.append((now, core.cid, "call", args, 0))
            if target.status == _WAITING and target.seq_nr >= target.wait_thr:
                target.stall_wait += now - target.wait_since
                target.status = _READY
                target.time = now
                target.pc += 1
                target.fetched = False
                push(now, _PH_EXEC, target.cid, "exec", target.cid)
            resume = now
        else:  # fetch
            core.fetched = True
            resume = now + t_mem
        core.status = _READY
        core.time = resume
        if kind != "fetch":
            core.pc += 1
            core.fetched = False
        push(resume, _PH_EXEC, core.cid, "exec", core.cid)

    # release cores: every HG's vg=0 immediately, the rest per scheme
    for core in cores:
        if scheme == "sequential" and core.vg != 0:
            core.status = _UNRELEASED
        else:
            push(0, _PH_EXEC, core.cid, "exec", core.cid)

    while heap:
        now, phase, key, _, kind, arg = heapq.heappop(heap)
        if kind == "exec":
            core = cores[arg]
            if core.status in (_HALTED, _BUS):
                raise SimError(f"core {arg}: spurious exec event")
            step(core, now)
        elif kind == "complete":
            cid, txn_kind, args = arg
            bus_core = cores[cid]
            finish_txn(bus_core, txn_kind, args, now)
            if pending:
                push(now, _PH_ARB, -1, "arb", None)
        else:  # arb
            if bus_busy_until > now or not pending:
                continue
            cands = sorted(pending)
            cid = min(cands, key=lambda c: (c - rr_next) % n_cores)
            req_time, txn_kind, payload, args = pending.pop(cid)
            cores[cid].stall_bus += now - req_time
            dur = t_bus + -(-payload // bus_w)
            bus_busy_until = now + dur
            rr_next = (cid + 1) % n_cores
            push(now + dur, _PH_COMPLETE, cid, "complete", (cid, txn_kind, args))

    if halted != n_cores:
        status = {}
        for core in cores:
            st = _STATUS_NAMES[core.status]
            if core.status == _WAITING:
                st += f" (SEQ_NR {core.seq_nr} < {core.wait_thr}, pc {core.pc})"
            elif core.status != _HALTED:
                st += f" (pc {core.pc})"
            status[core.cid] = st
        blocked = sum(1 for c in cores if c.status != _HALTED)
        raise DeadlockError(f"deadlock: {blocked}/{n_cores} cores never "
                            f"halted", status)

    per_core = {
        "loads_values": [c.loads for c in cores],
        "stores_values": [c.stores for c in cores],
        "calls": [c.calls for c in cores],
        "waits": [c.waits for c in cores],
        "stall_bus": [c.stall_bus for c in cores],
        "stall_wait": [c.stall_wait for c in cores],
        "halt_cycle": [c.halt_time for c in cores],
    }
    counts = StaticCounts(loads_values=sum(per_core["loads_values"]),
                          stores_values=sum(per_core["stores_values"]),
                          calls=sum(per_core["calls"]),
                          waits=sum(per_core["waits"]))
    oy, ox, oz = state.cfg.ofm_dims
    return SimReport(
        scheme=scheme, core_count=n_cores, v_groups=state.v_groups,
        h_groups=state.h_groups, out_vectors=state.out_vectors, k_num=oz,
        ofm_offset=ofm_off, total_cycles=max(c.halt_time for c in cores),
        completed=True, counts=counts, per_core=per_core,
        cores_meta=tuple((c.hg, c.vg, c.rows, c.row_start) for c in cores),
        ofm=ofm.reshape(oy, ox, oz), trace=tuple(trace) if trace is not None else None)


def speedup(report: SimReport, sequential_report: SimReport) -> float:
    """t_sequential / t_scheme. Bounded by P_V up to arbitration noise: the
    sequential baseline issues its bus traffic in per-phase lockstep bursts
    that queue worse than the pipelined schemes' staggered accesses, so on
    very narrow buses the ratio can edge past P_V by a fraction of a percent
    (worst observed ~0.15% at a 4 B bus). Anything beyond that means the
    model is broken, so it raises instead of returning."""
    if sequential_report.scheme != "sequential":
        raise SimError("baseline report must come from a sequential run")
    if report.total_cycles <= 0:
        raise SimError("zero-cycle run, speedup undefined")
    s = sequential_report.total_cycles / report.total_cycles
    bound = report.v_groups
    if s > bound * 1.005:
        raise SpeedupBoundError(f"speedup {s:.4f} exceeds P_V={bound}")
    return s
