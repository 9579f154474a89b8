"""cimflow: compiler + cycle-level simulator for CNN layers on multi-core
crossbar in-memory accelerators.

Pipeline: parse a model (`model`), partition its kernel matrix over cores
(`mapping`), emit per-core instruction streams under a synchronization
scheme (`codegen`, `isa`), and execute them on a shared-bus event simulator
(`simulator`) whose outputs are checked against direct convolution
(`oracle`) and whose ordering guarantees are auditable from traces
(`monitor`).
"""

from .codegen import (SCHEMES, CapacityError, CodegenError, MemoryLayout,
                      Program, StaticCounts, call_overhead_percent,
                      count_calls_analytic, count_traffic_analytic,
                      emit_program, read_bin, read_cfg, tamper_wait,
                      write_bin, write_cfg)
from .fixtures import (make_layer, mobilenet_pointwise_layers, random_ifm,
                       resnet18_conv3x3_layers)
from .mapping import (MappingPlan, Partition, build_mapping_plan,
                      compute_partition, unroll_input_vector,
                      unroll_kernel_matrix)
from .model import (LayerSpec, ModelError, ModelParseError, OfmShape,
                    infer_ofm_shape, parse_model, serialize_model)
from .monitor import ProtocolViolation, check_protocol
from .oracle import golden_conv2d, golden_im2col_mvm
from .report import (REFERENCE_COUNTS, SweepSpec, run_sweep, sweep_to_csv,
                     sync_memory_comparison, table2_rows, verify_layer)
from .simulator import (ArchConfig, ConsistencyError, DeadlockError,
                        SimError, SimReport, load_setup, parse_arch,
                        report_to_json, run, speedup, trace_to_csv)

__version__ = "0.1.0"

__all__ = [
    "ArchConfig", "CapacityError", "CodegenError", "ConsistencyError",
    "DeadlockError", "LayerSpec", "MappingPlan", "MemoryLayout",
    "ModelError", "ModelParseError", "OfmShape", "Partition", "Program",
    "ProtocolViolation", "REFERENCE_COUNTS", "SCHEMES", "SimError",
    "SimReport", "StaticCounts", "SweepSpec", "build_mapping_plan",
    "call_overhead_percent", "check_protocol", "compute_partition",
    "count_calls_analytic", "count_traffic_analytic", "emit_program",
    "golden_conv2d", "golden_im2col_mvm", "infer_ofm_shape", "load_setup",
    "make_layer", "mobilenet_pointwise_layers", "parse_arch", "parse_model",
    "random_ifm", "read_bin", "read_cfg", "report_to_json",
    "resnet18_conv3x3_layers",
    "run", "run_sweep", "serialize_model", "speedup", "sweep_to_csv",
    "sync_memory_comparison", "table2_rows", "tamper_wait", "trace_to_csv",
    "unroll_input_vector", "unroll_kernel_matrix", "verify_layer",
    "write_bin", "write_cfg",
]
