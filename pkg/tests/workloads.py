"""Mixed router workload shared by the router tests and the acceptance suite."""
from __future__ import annotations

from agridwh.bench import urea_query
from agridwh.olap import CubeQuery
from agridwh.router import HotGet, HotScan, RoutingConfig, SyncJob, Tiers, hot_upsert, route_and_execute

NOW = 1_700_000_000.0
SENSORS = "sensors"
TARGET = "farmer_totals"

ANALYTICAL_SQL = (
    urea_query(),
    "SELECT s.FarmerID, SUM(f.appliedQuantity) AS total FROM FieldFact f "
    "INNER JOIN Field fi ON f.FieldID = fi.FieldID INNER JOIN Site s ON fi.SiteID = s.SiteID "
    "GROUP BY s.FarmerID",
    "SELECT c.CropName, COUNT(*) FROM Sale f INNER JOIN Crop c ON f.CropID = c.CropID "
    "WHERE f.quantitySold >= 10 GROUP BY c.CropName ORDER BY c.CropName",
    "SELECT FarmerName FROM Farmer WHERE FarmerName LIKE 'a%'",
)

CUBE_QUERIES = (
    CubeQuery("FieldFact", ["time@year"], ["SUM(appliedQuantity)"]),
    CubeQuery("FieldFact", ["location@farmer"], ["COUNT(*)"], [("time", "season", {"2016-spring"})]),
    CubeQuery("Order", ["time@year"], ["SUM(quantityOrdered)"]),
)

SYNC_SQL = ("SELECT s.FarmerID, SUM(f.appliedQuantity) AS total, COUNT(*) AS n FROM FieldFact f "
            "INNER JOIN Field fi ON f.FieldID = fi.FieldID INNER JOIN Site s ON fi.SiteID = s.SiteID "
            "GROUP BY s.FarmerID")


def make_tiers(warehouse, schema=None) -> Tiers:
    config = RoutingConfig(sync_jobs=[SyncJob("farmer_totals", SYNC_SQL, TARGET, 60.0, None, ("FarmerID",))])
    tiers = Tiers(warehouse, config)
    # one covering cube so a share of the cube queries is answered from MOLAP
    tiers.cubes.get("FieldFact", ["time@season", "location@farmer"], ["SUM(appliedQuantity)", "COUNT(*)"],
                    warehouse)
    return tiers


def mixed_workload(rng, n: int) -> list:
    """``n`` routed requests (point reads, recent scans, SQL and cube queries), with sensor
    writes and sync runs interleaved between them."""
    items = []
    while sum(kind == "route" for kind, _ in items) < n:
        r = rng.random()
        sensor = f"s{int(rng.integers(0, 20)):02d}"
        if r < 0.25:
            body = {"ts": NOW - float(rng.integers(0, 48 * 3600)), "field": int(rng.integers(1, 5)),
                    "moisture": round(float(rng.random()), 3)}
            items.append(("upsert", (SENSORS, sensor, body)))
        elif r < 0.45:
            items.append(("route", HotGet(SENSORS, sensor)))
        elif r < 0.5:
            items.append(("route", HotGet(TARGET, str(int(rng.integers(1, 40))))))
        elif r < 0.65:
            where = (("field", int(rng.integers(1, 5))),) if rng.random() < 0.5 else ()
            items.append(("route", HotScan(SENSORS, where, now=NOW)))
        elif r < 0.8:
            items.append(("route", ANALYTICAL_SQL[int(rng.integers(len(ANALYTICAL_SQL)))]))
        elif r < 0.95:
            items.append(("route", CUBE_QUERIES[int(rng.integers(len(CUBE_QUERIES)))]))
        else:
            items.append(("sync", None))
    return items


def run_workload(tiers: Tiers, items, sync=None) -> list:
    """Execute ``items``; returns the trace of every routed request."""
    traces = []
    for kind, payload in items:
        if kind == "upsert":
            hot_upsert(tiers, *payload)
        elif kind == "sync":
            sync(tiers)
        else:
            traces.append(route_and_execute(payload, tiers)[1])
    return traces
