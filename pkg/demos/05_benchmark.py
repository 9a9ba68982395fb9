# To convert to jupyter notebook type: py2nb demos/05_benchmark.py
# The ten query groups, timed on both engines, and the published speedup arithmetic.
#|
# Imports
import tempfile
from pathlib import Path

from agridwh.bench import (TimingRecord, compute_speedups, emit_report, generate_query_suite,
                           run_benchmark)
from agridwh.etl import SourceGenSpec, etl_run, generate_synthetic_sources
from agridwh.schema import build_default_schema
from agridwh.storage import TieredWarehouse
#-------------

#|
# Group means from the published runtime chart (seconds), baseline then ours
baseline = [1081.5, 599.7, 111.7, 790.4, 776.6, 1109.2, 483, 1057.3, 297.9, 571.1]
ours = [173.4, 205.2, 91.2, 276.4, 342.8, 238, 143.7, 228.3, 94.2, 366.4]
records = [TimingRecord(g * 5 + i + 1, g + 1, engine, (t,))
           for g, (b, o) in enumerate(zip(baseline, ours)) for i in range(5)
           for engine, t in (("baseline", b), ("ours", o))]
report = compute_speedups(records)
print([round(g.times, 2) for g in report.per_group], round(report.overall_times, 2))
#-------------------------------------------------------------------------------------

#|
# The same protocol on a generated warehouse (about 100k FieldFact rows)
work = Path(tempfile.mkdtemp(prefix="agridwh-demo-"))
generate_synthetic_sources(SourceGenSpec(seed=42, n_datasets=29, rows_per_fact=3500), work / "src")
wh = TieredWarehouse(work / "wh")
etl_run(work / "src", wh)
suite = generate_query_suite(42, build_default_schema(), wh)
print(suite[8].queries[0])
#-------------------------

#|
timings = run_benchmark(suite, reps=1, warehouse=wh)
measured = compute_speedups(timings)
for g in measured.per_group:
    print(f"group {g.group:2d}: naive {g.baseline_avg:.4f}s, analytic {g.ours_avg:.4f}s, {g.times:.1f}x")
print("overall", round(measured.overall_times, 2))
print(emit_report(measured, work / "report"))
#--------------------------------------------
