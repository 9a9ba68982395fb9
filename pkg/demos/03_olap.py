# To convert to jupyter notebook type: py2nb demos/03_olap.py
# Cubes over the time and location hierarchies, and the HOLAP choice between cube and SQL.
#|
# Imports
import tempfile
from pathlib import Path

from agridwh.etl import SourceGenSpec, etl_run, generate_synthetic_sources
from agridwh.olap import CubeQuery, build_cube, drilldown, holap_answer, pivot, rollup, slice_dice
from agridwh.storage import TieredWarehouse
#-------------

#|
work = Path(tempfile.mkdtemp(prefix="agridwh-demo-"))
generate_synthetic_sources(SourceGenSpec(seed=7, n_datasets=29, rows_per_fact=300), work / "src")
wh = TieredWarehouse(work / "wh")
etl_run(work / "src", wh)
#-------------------------

#|
# Applied quantity by season and farmer
cube = build_cube("FieldFact", ["time@season", "location@farmer"],
                  ["SUM(appliedQuantity)", "COUNT(*)"], wh)
print(len(cube.cells), "cells")
print(cube.to_csv()[:400])
#-------------------------

#|
# Roll up to years from the cells alone, then drill back down from the facts
years = rollup(cube, "time")
print(years.to_csv()[:300])
back = drilldown(years, "time", wh)
print("drill-down matches the season cube:", back.cells.keys() == cube.cells.keys())
#------------------------------------------------------------------------------------

#|
# Spring only, shown as a season by farmer grid
springs = {m for m in cube.members[("time", "season")] if m.endswith("-spring")}
grid = pivot(slice_dice(cube, [("time", springs)]))
print(grid.to_csv()[:600])
#-------------------------

#|
# A covered query is answered from the cube; a name filter has to go through SQL
q = CubeQuery("FieldFact", ["time@year"], ["SUM(appliedQuantity)"])
print(holap_answer(q, [cube], wh)[1])
q = CubeQuery("FieldFact", ["time@year"], ["SUM(appliedQuantity)"],
              attribute_filters=[("Farmer", "FarmerName", "LIKE", "a%")])
res, provenance = holap_answer(q, [cube], wh)
print(provenance, res.metadata["sql"])
#-------------------------------------
