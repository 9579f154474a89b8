"""Execution-trace checker for the ownership protocol.

For every (HG, output vector) the cores of that HG must take turns: each
touches the vector's OFM slice exactly once, inside an exclusive window that
starts with its first OFM access and ends with the CALL handing the vector
on (or the final STORE for the last owner). Run with collect_trace=True and
feed the report here.
"""

from __future__ import annotations

from dataclasses import dataclass

from .simulator import SimReport


class ProtocolViolation(Exception):
    pass


@dataclass(frozen=True)
class ProtocolStats:
    vectors_checked: int
    intervals_checked: int


def check_protocol(report: SimReport) -> ProtocolStats:
    if report.trace is None:
        raise ProtocolViolation("report carries no trace; run with collect_trace=True")
    k_num = report.k_num
    ofm_off = report.ofm_offset
    hg_of = {cid: meta[0] for cid, meta in enumerate(report.cores_meta)}
    # (core, vector) -> [first_access_cycle, release_cycle]
    windows = {}
    stores = {}
    last_vec = {}  # core -> vector whose slice it touched most recently
    for cycle, core, event, addr, length in report.trace:
        if event in ("load", "store") and addr >= ofm_off:
            vec = (addr - ofm_off) // 4 // k_num
            key = (core, vec)
            if key in windows:
                windows[key][1] = cycle
            else:
                windows[key] = [cycle, cycle]
            last_vec[core] = vec
            if event == "store":
                stores[key] = stores.get(key, 0) + 1
        elif event == "call":
            if core not in last_vec:
                raise ProtocolViolation(f"core {core}: CALL before any OFM access")
            windows[(core, last_vec[core])][1] = cycle
    by_vec = {}
    for (core, vec), win in windows.items():
        by_vec.setdefault((hg_of[core], vec), []).append((core, win))
    intervals = 0
    for (hg, vec), owners in sorted(by_vec.items()):
        if len(owners) != report.v_groups:
            raise ProtocolViolation(
                f"hg {hg} vector {vec}: {len(owners)} owners, expected "
                f"{report.v_groups}")
        seen = set()
        for core, _ in owners:
            if core in seen:
                raise ProtocolViolation(f"hg {hg} vector {vec}: core {core} "
                                        "owned the vector twice")
            seen.add(core)
            if stores.get((core, vec), 0) != 1:
                raise ProtocolViolation(f"hg {hg} vector {vec}: core {core} "
                                        f"stored {stores.get((core, vec), 0)} times")
        owners.sort(key=lambda cw: cw[1][0])
        for (c_a, win_a), (c_b, win_b) in zip(owners, owners[1:]):
            intervals += 1
            if win_b[0] < win_a[1]:
                raise ProtocolViolation(
                    f"hg {hg} vector {vec}: cores {c_a} and {c_b} overlap "
                    f"({win_a} vs {win_b})")
    return ProtocolStats(vectors_checked=len(by_vec), intervals_checked=intervals)
