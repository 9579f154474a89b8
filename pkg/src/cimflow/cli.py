"""Command-line front end.

Exit codes: 0 success, 1 usage/config/model errors, 2 verification or
reference mismatch, 3 simulated deadlock.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import fixtures, report
from .codegen import (CodegenError, emit_program, read_bin, tamper_wait,
                      write_bin, write_cfg)
from .isa import EncodingError
from .mapping import build_mapping_plan, format_plan
from .model import ModelError, parse_model
from .monitor import ProtocolViolation, check_protocol
from .oracle import golden_conv2d
from .simulator import (ArchConfig, DeadlockError, SimError, load_setup,
                        parse_arch, report_to_json, run, trace_to_csv)


class _Fail(Exception):
    def __init__(self, code: int, msg: str):
        super().__init__(msg)
        self.code = code


def _xbar(text: str):
    try:
        m, n = text.lower().split("x")
        return int(m), int(n)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected MxN, got {text!r}")


def _int_list(text: str):
    return tuple(int(t) for t in text.split(",") if t)


def _str_list(text: str):
    return tuple(t for t in text.split(",") if t)


def _fault(text: str):
    parts = text.split(":")
    if len(parts) > 3:
        raise argparse.ArgumentTypeError("expected CORE[:IDX[:DELTA]]")
    core = int(parts[0])
    idx = int(parts[1]) if len(parts) > 1 else 0
    delta = int(parts[2]) if len(parts) > 2 else 1
    return core, idx, delta


def _arch_from(args) -> ArchConfig:
    if getattr(args, "arch", None):
        with open(args.arch) as fh:
            arch = parse_arch(fh.read())
    else:
        arch = ArchConfig()
    if getattr(args, "xbar", None):
        arch = replace(arch, rows=args.xbar[0], cols=args.xbar[1])
    if getattr(args, "bus_width", None):
        arch = replace(arch, bus_width_bytes=args.bus_width)
    if getattr(args, "scheme", None):
        arch = replace(arch, scheme=args.scheme)
    arch.validate()
    return arch


def _load_layers(model_path, weights_path):
    with open(model_path) as fh:
        text = fh.read()
    with open(weights_path, "rb") as fh:
        blob = fh.read()
    return parse_model(text, blob)


def _pick_layer(layers, name):
    if name is None:
        if len(layers) == 1:
            return layers[0]
        raise _Fail(1, "model has several layers; pick one with --layer "
                       f"({', '.join(l.name for l in layers)})")
    for layer in layers:
        if layer.name == name:
            return layer
    raise _Fail(1, f"no layer named {name!r}")


def _fixture_layers(which, seed):
    if which == "mobilenet":
        return fixtures.mobilenet_pointwise_layers(seed)
    if which == "resnet18":
        return fixtures.resnet18_conv3x3_layers(seed)
    raise _Fail(1, f"unknown fixture {which!r}")


# ------------------------------------------------------------- subcommands

def cmd_compile(args) -> int:
    arch = _arch_from(args)
    layers = _load_layers(args.model, args.weights)
    layer = _pick_layer(layers, args.layer)
    plan = build_mapping_plan(layer, arch.rows, arch.cols)
    if args.dump_plan:
        print(format_plan(plan))
    program = emit_program(plan, arch.scheme)
    prefix = args.out or layer.name
    bin_path, cfg_path = prefix + ".bin", prefix + ".cfg"
    with open(bin_path, "wb") as fh:
        fh.write(write_bin(program, arch.shared_mem_bytes))
    with open(cfg_path, "w") as fh:
        fh.write(write_cfg(plan, program))
    print(f"{layer.name}: {plan.partition.core_count} cores "
          f"({plan.partition.h_groups}x{plan.partition.v_groups}), "
          f"scheme={arch.scheme} -> {bin_path}, {cfg_path}")
    return 0


def cmd_simulate(args) -> int:
    arch = _arch_from(args)
    with open(args.bin, "rb") as fh:
        bin_data = fh.read()
    with open(args.cfg) as fh:
        cfg_text = fh.read()
    if args.fault_wait is not None:
        core, idx, delta = args.fault_wait
        program = read_bin(bin_data)
        bin_data = write_bin(tamper_wait(program, core=core, index=idx,
                                         delta=delta))
    ifm = np.fromfile(args.ifm, dtype=np.int8)
    state = load_setup(bin_data, cfg_text, ifm)
    arch = replace(arch, scheme=state.program.scheme)
    want_trace = bool(args.trace or args.check_protocol)
    rep = run(state, arch, collect_trace=want_trace)
    if args.trace:
        with open(args.trace, "w") as fh:
            fh.write(trace_to_csv(rep.trace))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report_to_json(rep))
    print(f"scheme={rep.scheme} cores={rep.core_count} "
          f"cycles={rep.total_cycles} loads={rep.counts.loads_values} "
          f"stores={rep.counts.stores_values} calls={rep.counts.calls}")
    if args.check_protocol:
        stats = check_protocol(rep)
        print(f"protocol ok: {stats.vectors_checked} vectors, "
              f"{stats.intervals_checked} interval pairs")
    return 0


def cmd_sweep(args) -> int:
    if args.model:
        if not args.weights:
            raise _Fail(1, "--model needs --weights")
        layers = _load_layers(args.model, args.weights)
    else:
        layers = _fixture_layers(args.fixture, args.seed)
    if args.layers:
        keep = set(args.layers)
        layers = [l for l in layers if l.name in keep]
        if not layers:
            raise _Fail(1, "no matching layers")
    arch = _arch_from(args)
    spec = report.SweepSpec(layers=tuple(layers),
                            xbar_dims=tuple(args.xbar_dims or [(64, 64)]),
                            bus_widths=args.bus_widths,
                            schemes=args.schemes, seed=args.seed)
    rows = report.run_sweep(spec, arch_base=arch, jobs=args.jobs)
    csv = report.sweep_to_csv(rows)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(csv)
        print(f"wrote {args.out} ({len(rows)} rows)")
    else:
        sys.stdout.write(csv)
    if args.gnuplot:
        os.makedirs(args.gnuplot, exist_ok=True)
        for name, content in report.gnuplot_datasets(rows).items():
            with open(os.path.join(args.gnuplot, name), "w") as fh:
                fh.write(content)
        plt = os.path.join(args.gnuplot, "speedup.plt")
        with open(plt, "w") as fh:
            fh.write('set xlabel "bus width (bytes)"\n'
                     'set ylabel "speedup"\nset key left\n'
                     'plot ' + ", ".join(
                         f'"{s}.dat" using 2:3 with linespoints title "{s}"'
                         for s in sorted({r["scheme"] for r in rows
                                          if r["status"] == "ok"})) + "\n")
    bad = [r for r in rows if r["status"] != "ok"]
    if bad:
        for r in bad:
            print(f"point failed: {r['layer']} {r['m']}x{r['n']} "
                  f"bus={r['bus_width']}: {r['status']}", file=sys.stderr)
        return 1
    return 0


def cmd_verify(args) -> int:
    if args.model:
        if not args.weights:
            raise _Fail(1, "--model needs --weights")
        layers = _load_layers(args.model, args.weights)
    else:
        layers = _fixture_layers(args.fixture, args.seed)
    if args.layers:
        keep = set(args.layers)
        layers = [l for l in layers if l.name in keep]
        if not layers:
            raise _Fail(1, "no matching layers")
    arch = _arch_from(args)
    failed = False
    for layer in layers:
        results = report.verify_layer(layer, arch.rows, arch.cols,
                                      schemes=args.schemes, seed=args.seed,
                                      arch_base=arch)
        for scheme, ok, rep in results:
            tag = "ok" if ok else "MISMATCH"
            print(f"{layer.name:<10} {scheme:<12} cores={rep.core_count:<5} "
                  f"cycles={rep.total_cycles:<10} {tag}")
            failed |= not ok
    return 2 if failed else 0


def cmd_table2(args) -> int:
    layers = fixtures.mobilenet_pointwise_layers(args.seed)
    rows = report.table2_rows(layers)
    print(report.format_table(rows))
    bad = report.diff_reference(rows)
    if bad:
        for layer, size, ref, got in bad:
            print(f"MISMATCH {layer}@{size}: expected {ref}, got {got}",
                  file=sys.stderr)
        return 2
    print("all rows match the reference counts")
    if args.simulate:
        checked = 0
        for layer in layers:
            for size in report.TABLE_SIZES:
                ref = report.REFERENCE_COUNTS[layer.name][size]
                if ref[0] > args.max_cores:
                    continue
                rep = report.simulate_counts(layer, size, seed=args.seed)
                got = (rep.core_count, rep.counts.loads_values,
                       rep.counts.stores_values, rep.counts.calls)
                if got != ref:
                    print(f"SIM MISMATCH {layer.name}@{size}: expected {ref},"
                          f" got {got}", file=sys.stderr)
                    return 2
                checked += 1
                print(f"simulated {layer.name}@{size}: counters match")
        print(f"simulation confirmed {checked} configurations "
              f"(cores <= {args.max_cores})")
    return 0


def cmd_syncmem(args) -> int:
    cmp = report.sync_memory_comparison(args.cores, baseline_bytes=args.baseline)
    print(f"cores:            {cmp.core_count}")
    print(f"register file:    {cmp.ours_bytes} B (one u32 per core)")
    print(f"flag-table ref:   {cmp.baseline_bytes} B")
    print(f"savings:          {cmp.savings_percent:.4f}%")
    print(f"break-even cores: {cmp.break_even_cores}")
    return 0


def cmd_fixtures(args) -> int:
    paths = fixtures.write_fixture_files(args.dir, which=args.which,
                                         seed=args.seed)
    for role in sorted(paths):
        print(f"{role}: {paths[role]}")
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="cimflow",
                                  description="crossbar in-memory CNN "
                                              "compiler and simulator")
    sub = top.add_subparsers(dest="cmd", required=True)

    def common(p, scheme=True):
        p.add_argument("--arch", help="arch config file (key=value lines)")
        p.add_argument("--xbar", type=_xbar, metavar="MxN",
                       help="crossbar rows x cols")
        p.add_argument("--bus-width", type=int, metavar="BYTES")
        if scheme:
            p.add_argument("--scheme",
                           choices=("sequential", "linear", "cyclic"))
        p.add_argument("--seed", type=int, default=fixtures.DEFAULT_SEED)

    p = sub.add_parser("compile", help="map a layer onto cores and emit "
                                       "binary + core config")
    p.add_argument("model")
    p.add_argument("weights")
    p.add_argument("--layer")
    p.add_argument("--out", help="output prefix (default: layer name)")
    p.add_argument("--dump-plan", action="store_true")
    common(p)
    p.set_defaults(fn=cmd_compile)

    p = sub.add_parser("simulate", help="run a compiled binary")
    p.add_argument("bin")
    p.add_argument("cfg")
    p.add_argument("ifm", help="raw int8 input tensor")
    p.add_argument("--trace", metavar="CSV")
    p.add_argument("--out", metavar="JSON")
    p.add_argument("--fault-wait", type=_fault, metavar="CORE[:IDX[:DELTA]]",
                   help="raise one WAIT threshold to provoke a deadlock")
    p.add_argument("--check-protocol", action="store_true")
    common(p, scheme=False)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("sweep", help="simulate a grid of configurations")
    p.add_argument("--fixture", default="mobilenet",
                   choices=("mobilenet", "resnet18"))
    p.add_argument("--model")
    p.add_argument("--weights")
    p.add_argument("--layers", type=_str_list, metavar="NAME,NAME")
    p.add_argument("--xbar-dims", type=_xbar, action="append", metavar="MxN")
    p.add_argument("--bus-widths", type=_int_list, default=(4, 16, 64))
    p.add_argument("--schemes", type=_str_list, default=("linear", "cyclic"))
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", metavar="CSV")
    p.add_argument("--gnuplot", metavar="DIR")
    common(p, scheme=False)
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("verify", help="check simulated outputs against the "
                                      "direct-convolution oracle")
    p.add_argument("--fixture", default="mobilenet",
                   choices=("mobilenet", "resnet18"))
    p.add_argument("--model")
    p.add_argument("--weights")
    p.add_argument("--layers", type=_str_list, metavar="NAME,NAME")
    p.add_argument("--schemes", type=_str_list,
                   default=("sequential", "linear", "cyclic"))
    common(p, scheme=False)
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("table2", help="reproduce the per-layer core/traffic "
                                      "count table")
    p.add_argument("--simulate", action="store_true",
                   help="confirm counts by full simulation")
    p.add_argument("--max-cores", type=int, default=64)
    p.add_argument("--seed", type=int, default=fixtures.DEFAULT_SEED)
    p.set_defaults(fn=cmd_table2)

    p = sub.add_parser("syncmem", help="sync-register memory vs a central "
                                       "flag table")
    p.add_argument("--cores", type=int, default=1024)
    p.add_argument("--baseline", type=int, default=32768)
    p.set_defaults(fn=cmd_syncmem)

    p = sub.add_parser("fixtures", help="write bundled model fixtures to disk")
    p.add_argument("dir")
    p.add_argument("--which", default="mobilenet",
                   choices=("mobilenet", "resnet18"))
    p.add_argument("--seed", type=int, default=fixtures.DEFAULT_SEED)
    p.set_defaults(fn=cmd_fixtures)

    return top


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; 2 means "verification mismatch"
        # here, so fold usage problems into the config-error code
        return 0 if exc.code in (0, None) else 1
    try:
        return args.fn(args)
    except _Fail as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except DeadlockError as exc:
        print(exc, file=sys.stderr)
        stuck = {c: s for c, s in exc.core_status.items() if s != "halted"}
        for core, status in sorted(stuck.items())[:20]:
            print(f"  core {core}: {status}", file=sys.stderr)
        if len(stuck) > 20:
            print(f"  ... and {len(stuck) - 20} more", file=sys.stderr)
        return 3
    except ProtocolViolation as exc:
        print(f"protocol violation: {exc}", file=sys.stderr)
        return 2
    except (ModelError, CodegenError, EncodingError, SimError, OSError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
