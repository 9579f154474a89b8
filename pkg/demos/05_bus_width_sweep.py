#!/usr/bin/env python3
"""
Sweeping bus width: when does the interconnect stop mattering?
==============================================================

Runs one benchmark layer across bus widths and both overlapped schemes,
with a sequential run per width as the speedup baseline. The sweep is
seeded and deterministic: same spec in, same CSV bytes out, regardless of
worker count - which is also what makes the results archivable.
"""

import pathlib
import tempfile

from cimflow import report
from cimflow.fixtures import mobilenet_pointwise_layers

layer = mobilenet_pointwise_layers()[2]                    # pw3
spec = report.SweepSpec(layers=(layer,), xbar_dims=((64, 64),),
                        bus_widths=(4, 16, 64))
rows = report.run_sweep(spec, jobs=3)

for r in rows:
    if r["status"] != "ok":
        print(r["layer"], r["status"])
        continue
    print(f"bus {r['bus_width']:>2d} B  {r['scheme']:10s} {r['cycles']:>9d} cycles  "
          f"speedup {r['speedup']:.3f} = {100 * r['speedup_over_pv']:.1f}% of P_V={r['p_v']}")

# wider bus never hurts
for scheme in ("sequential", "linear", "cyclic"):
    series = [r["cycles"] for r in rows if r["scheme"] == scheme]
    assert series == sorted(series, reverse=True), (scheme, series)
print("\ncycles are monotonically non-increasing in bus width for every scheme")

# the CSV is the canonical artifact; gnuplot-ready columns come for free
csv_text = report.sweep_to_csv(rows)
out = pathlib.Path(tempfile.mkdtemp(prefix="cimflow_sweep_"))
(out / "sweep.csv").write_text(csv_text)
for scheme, dat in report.gnuplot_datasets(rows).items():
    (out / f"{scheme}.dat").write_text(dat)
print(f"wrote sweep.csv and per-scheme .dat files to {out}")
print("rerunning the same spec reproduces sweep.csv byte for byte:",
      report.sweep_to_csv(report.run_sweep(spec)) == csv_text)
