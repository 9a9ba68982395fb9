# To convert to jupyter notebook type: py2nb demos/02_queries.py
# Runs the Urea query on both engines and looks at the physical plan.
#|
# Imports
import tempfile
import time
from pathlib import Path

from agridwh.bench import urea_query
from agridwh.etl import SourceGenSpec, etl_run, generate_synthetic_sources
from agridwh.query import execute_naive_oracle, execute_plan, parse_query, plan_query
from agridwh.storage import TieredWarehouse
#-------------

#|
# A seeded warehouse with about 9k FieldFact rows; the naive engine joins by nested loops
work = Path(tempfile.mkdtemp(prefix="agridwh-demo-"))
generate_synthetic_sources(SourceGenSpec(seed=42, n_datasets=29, rows_per_fact=300), work / "src")
wh = TieredWarehouse(work / "wh")
etl_run(work / "src", wh)
print(wh.store.row_count("FieldFact"), "FieldFact rows")
#-------------------------------------------------------

#|
# Spring-2017 applications on the fields of the three farmers who used the most Urea in spring 2016
sql = urea_query()
print(sql)
ast = parse_query(sql)
plan = plan_query(ast, wh)
print(plan.explain())
#--------------------

#|
# Both engines give the same bag of rows; the analytic one is faster
t0 = time.perf_counter()
ours = execute_plan(plan, wh)
t1 = time.perf_counter()
oracle = execute_naive_oracle(ast, wh)
t2 = time.perf_counter()
print(len(ours), "rows; equal:", ours.same_as(oracle))
print(f"analytic {t1 - t0:.3f}s, naive {t2 - t1:.3f}s")
print(ours.to_table()[:800])
#----------------------------
