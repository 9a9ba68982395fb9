# To convert to jupyter notebook type: py2nb demos/01_build_warehouse.py
# Builds a small warehouse from synthetic farm datasets and inspects the ETL report.
#|
# Imports
import tempfile
from pathlib import Path

from agridwh.etl import SourceGenSpec, etl_run, generate_synthetic_sources
from agridwh.schema import build_default_schema
from agridwh.storage import TieredWarehouse
#-------------

#|
# The constellation schema: three fact tables sharing nineteen dimensions
schema = build_default_schema()
for fact in schema.facts:
    print(fact.name, len(fact.dimension_refs), "dimensions,", [m.name for m in fact.measures])
#-------------------------------------------------------------------------------------------

#|
# Twenty-nine source datasets with overlapping dimension rows and 1% bad foreign keys
work = Path(tempfile.mkdtemp(prefix="agridwh-demo-"))
spec = SourceGenSpec(seed=42, n_datasets=29, rows_per_fact=500, overlap_fraction=0.3, bad_fk_fraction=0.01)
summary = generate_synthetic_sources(spec, work / "src")
print(len(summary["datasets"]), "datasets,", len(summary["injections"]), "injected FK errors")
#-----------------------------------------------------------------------------------------------

#|
# Stage, conform and load
wh = TieredWarehouse(work / "wh")
report, quarantine = etl_run(work / "src", wh)
for table in ("Farmer", "Fertiliser", "FieldFact", "Order", "Sale"):
    print(table, report.tables[table])
print("conserved:", report.conserved)
#-------------------------------------

#|
# Every quarantined row is one of the injected errors
injected = {(i["dataset_id"], i["table"], i["row_index"]) for i in summary["injections"]}
print(len(quarantine), "quarantined;", {q.source for q in quarantine} == injected)
print(quarantine[0])
#--------------------
