"""Core instruction set and its fixed-width binary encoding.

Each instruction is one 16-byte little-endian word:

    [0]      opcode (u8)
    [1]      zero
    [2:4]    u16 small operand: len (LOAD/STORE), core id (CALL), act kind (ACT)
    [4:8]    u32 operand: byte address (LOAD/STORE), threshold (WAIT)
    [8:10]   u16 buffer offset (LOAD/STORE)
    [10:16]  zero

In-memory form is a plain tuple (op, a, b, c):

    LOAD/STORE -> (op, addr, len, buf_off)
    ACT        -> (op, kind, 0, 0)        kind: 0 none, 1 relu, 2 leaky_relu
    CALL       -> (op, target_core, 0, 0)
    WAIT       -> (op, threshold, 0, 0)
    MVM/ACC/ADDB/HALT -> (op, 0, 0, 0)

LOADs from the IFM or zero region fill the input buffer; LOADs from the OFM
region fill the partial-sum buffer. STORE writes accumulator words to the OFM.
"""

from __future__ import annotations

import struct

WORD = 16

OP_LOAD = 1
OP_STORE = 2
OP_MVM = 3
OP_ACC = 4
OP_ADDB = 5
OP_ACT = 6
OP_CALL = 7
OP_WAIT = 8
OP_HALT = 9

NAMES = {
    OP_LOAD: "LOAD", OP_STORE: "STORE", OP_MVM: "MVM", OP_ACC: "ACC",
    OP_ADDB: "ADDB", OP_ACT: "ACT", OP_CALL: "CALL", OP_WAIT: "WAIT",
    OP_HALT: "HALT",
}

ACT_NONE, ACT_RELU, ACT_LEAKY = 0, 1, 2
ACT_KINDS = {"none": ACT_NONE, "relu": ACT_RELU, "leaky_relu": ACT_LEAKY}

_FMT = struct.Struct("<BBHIH6s")
_PAD6 = b"\x00" * 6


class EncodingError(Exception):
    pass


def load(addr: int, length: int, buf_off: int = 0) -> tuple:
    return (OP_LOAD, addr, length, buf_off)


def store(addr: int, length: int, buf_off: int = 0) -> tuple:
    return (OP_STORE, addr, length, buf_off)


def mvm() -> tuple:
    return (OP_MVM, 0, 0, 0)


def acc() -> tuple:
    return (OP_ACC, 0, 0, 0)


def addb() -> tuple:
    return (OP_ADDB, 0, 0, 0)


def act(kind: int) -> tuple:
    return (OP_ACT, kind, 0, 0)


def call(target_core: int) -> tuple:
    return (OP_CALL, target_core, 0, 0)


def wait(threshold: int) -> tuple:
    return (OP_WAIT, threshold, 0, 0)


def halt() -> tuple:
    return (OP_HALT, 0, 0, 0)


def encode(instr: tuple) -> bytes:
    op, a, b, c = instr
    if op in (OP_LOAD, OP_STORE):
        small, big, boff = b, a, c
    elif op in (OP_ACT, OP_CALL):
        small, big, boff = a, 0, 0
    elif op == OP_WAIT:
        small, big, boff = 0, a, 0
    elif op in (OP_MVM, OP_ACC, OP_ADDB, OP_HALT):
        small, big, boff = 0, 0, 0
    else:
        raise EncodingError(f"unknown opcode {op}")
    if not (0 <= small < 1 << 16 and 0 <= big < 1 << 32 and 0 <= boff < 1 << 16):
        raise EncodingError(f"operand out of range in {format_instr(instr)}")
    return _FMT.pack(op, 0, small, big, boff, _PAD6)


def decode(word: bytes) -> tuple:
    if len(word) != WORD:
        raise EncodingError(f"instruction word must be {WORD} bytes, got {len(word)}")
    op, pad, small, big, boff, tail = _FMT.unpack(word)
    if pad != 0 or tail != _PAD6:
        raise EncodingError("nonzero padding bytes")
    if op in (OP_LOAD, OP_STORE):
        return (op, big, small, boff)
    if op in (OP_ACT, OP_CALL):
        return (op, small, 0, 0)
    if op == OP_WAIT:
        return (op, big, 0, 0)
    if op in (OP_MVM, OP_ACC, OP_ADDB, OP_HALT):
        return (op, 0, 0, 0)
    raise EncodingError(f"unknown opcode {op}")


def encode_stream(instrs) -> bytes:
    return b"".join(encode(i) for i in instrs)


def decode_stream(data: bytes) -> tuple:
    if len(data) % WORD:
        raise EncodingError(f"stream length {len(data)} is not a multiple of {WORD}")
    return tuple(decode(data[o:o + WORD]) for o in range(0, len(data), WORD))


def format_instr(instr: tuple) -> str:
    op, a, b, c = instr
    name = NAMES.get(op, f"OP{op}")
    if op in (OP_LOAD, OP_STORE):
        return f"{name} addr=0x{a:08x} len={b} buf={c}"
    if op == OP_ACT:
        return f"{name} kind={a}"
    if op == OP_CALL:
        return f"{name} core={a}"
    if op == OP_WAIT:
        return f"{name} ge={a}"
    return name
