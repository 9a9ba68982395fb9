# To convert to jupyter notebook type: py2nb demos/04_router.py
# Real-time reads go to the hot document store, analytical ones to the warehouse.
#|
# Imports
import tempfile
import time
from pathlib import Path

from agridwh.etl import SourceGenSpec, etl_run, generate_synthetic_sources
from agridwh.router import (HotGet, HotScan, RoutingConfig, SyncJob, Tiers, hot_upsert,
                            route_and_execute, run_sync)
from agridwh.storage import TieredWarehouse
#-------------

#|
work = Path(tempfile.mkdtemp(prefix="agridwh-demo-"))
generate_synthetic_sources(SourceGenSpec(seed=1, n_datasets=5, rows_per_fact=200), work / "src")
wh = TieredWarehouse(work / "wh")
etl_run(work / "src", wh)
job = SyncJob("crop_sales", "SELECT c.CropName, SUM(f.revenue) AS revenue FROM Sale f "
              "INNER JOIN Crop c ON f.CropID = c.CropID GROUP BY c.CropName",
              "crop_sales", 600.0, key_columns=("CropName",))
tiers = Tiers(wh, RoutingConfig(sync_jobs=[job]))
#-------------------------------------------------

#|
# Sensor readings land in the hot tier
now = time.time()
for i in range(5):
    hot_upsert(tiers, "sensors", f"probe{i}", {"ts": now - i * 3600 * 10, "moisture": 0.2 + i / 10})
res, trace = route_and_execute(HotGet("sensors", "probe1"), tiers)
print(res.rows, trace.request_class, trace.reads)
res, trace = route_and_execute(HotScan("sensors", now=now), tiers)
print([r[0] for r in res.rows], trace.request_class)
#----------------------------------------------------

#|
# An aggregate runs on the warehouse and never touches the hot tier
res, trace = route_and_execute(job.source, tiers)
print(trace.request_class, trace.provenance, sorted({r[1] for r in trace.reads}))
#--------------------------------------------------------------------------------

#|
# Syncing copies the aggregate into the hot tier for fast lookups
print(run_sync(job, tiers), "docs synced")
print(route_and_execute(HotGet("crop_sales", res.rows[0][0]), tiers)[0].rows)
#------------------------------------------------------------------------------
