"""Command-line entry point: ``agridwh <subcommand> [--flags]``.

Exit codes: 0 success, 1 user error (bad flags, bad SQL, unknown names),
2 internal error.  Data goes to stdout or files, diagnostics to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

log = logging.getLogger("agridwh")

DEFAULT_ROOT = "./warehouse"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


@dataclass
class CliConfig:
    root: Path
    routing_config: Path | None = None
    log_level: str = "WARNING"
    seed: int = 0


def _config(args) -> CliConfig:
    root = Path(args.root or os.environ.get("AGRIDWH_ROOT") or DEFAULT_ROOT)
    return CliConfig(root, Path(args.config) if args.config else None, args.log_level,
                     getattr(args, "seed", 0))


def _warehouse(cfg: CliConfig, must_exist=True):
    from .storage import TieredWarehouse
    if must_exist and not (cfg.root / "catalog.json").exists():
        raise UsageError(f"no warehouse at {cfg.root}; run `agridwh etl` first or set AGRIDWH_ROOT")
    cfg.root.mkdir(parents=True, exist_ok=True)
    return TieredWarehouse(cfg.root)


def _emit(result, fmt: str) -> None:
    text = {"csv": result.to_csv, "json": result.to_json, "table": result.to_table}[fmt]()
    sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _read_sql(args) -> str:
    if args.sql and args.file:
        raise UsageError("give either --sql or --file, not both")
    if args.file:
        return Path(args.file).read_text(encoding="utf-8")
    if args.sql:
        return args.sql
    raise UsageError("a query needs --sql or --file")


def _tiers(cfg: CliConfig, wh):
    from .router import RoutingConfig, Tiers
    rc = RoutingConfig.load(cfg.routing_config) if cfg.routing_config else RoutingConfig()
    state = cfg.root / "sync_state.json"
    if state.exists():
        last = json.loads(state.read_text(encoding="utf-8"))
        for job in rc.sync_jobs:
            job.last_run = last.get(job.name)
    return Tiers(wh, rc)


def _trace_log(cfg: CliConfig, trace) -> None:
    from .router import TraceLog
    TraceLog(cfg.root / "traces.jsonl").write(trace)
    print(trace.to_json(), file=sys.stderr)


# -- subcommands ---------------------------------------------------------------------

def cmd_gen_data(args, cfg):
    from .etl import SourceGenSpec, generate_synthetic_sources
    spec = SourceGenSpec(seed=cfg.seed, n_datasets=args.datasets, rows_per_fact=args.rows_per_fact,
                         overlap_fraction=args.overlap, bad_fk_fraction=args.bad_fk_fraction)
    summary = generate_synthetic_sources(spec, args.out)
    print(f"wrote {len(summary['datasets'])} datasets to {args.out} "
          f"({len(summary['injections'])} injected FK errors)", file=sys.stderr)


def cmd_etl(args, cfg):
    from .etl import etl_run
    wh = _warehouse(cfg, must_exist=False)
    if not Path(args.source).is_dir():
        raise UsageError(f"source directory {args.source} does not exist")
    report, quarantine = etl_run(args.source, wh, partition_size=args.partition_size)
    sys.stdout.write(report.to_json() + "\n")
    print(f"loaded {len(report.tables)} tables, {len(quarantine)} rows quarantined", file=sys.stderr)


def cmd_query(args, cfg):
    from .query import execute_naive_oracle, execute_plan, parse_query, plan_query
    sql = _read_sql(args)
    wh = _warehouse(cfg)
    if args.engine == "auto":
        from .router import route_and_execute
        result, trace = route_and_execute(sql, _tiers(cfg, wh))
        _trace_log(cfg, trace)
    elif args.engine == "naive":
        result = execute_naive_oracle(parse_query(sql), wh)
    else:
        ast = parse_query(sql)
        plan = plan_query(ast, wh)
        if args.explain:
            print(plan.explain(), file=sys.stderr)
        result = execute_plan(plan, wh)
    _emit(result, args.format)


def _parse_member_filters(items, cube):
    out = []
    for item in items or ():
        if "=" not in item:
            raise UsageError(f"--member expects hierarchy=m1,m2 (got {item!r})")
        axis, members = item.split("=", 1)
        known = cube.members.get(cube.axes[cube.axis_index(axis)], set())
        numeric = any(isinstance(m, int) for m in known)
        out.append((axis, [_member_value(m, numeric) for m in members.split(",")]))
    return out


def _member_value(text: str, numeric: bool):
    if numeric:
        try:
            return int(text)
        except ValueError:
            pass
    return text


def cmd_cube(args, cfg):
    from . import olap
    wh = _warehouse(cfg)
    cube = olap.build_cube(args.fact, args.axis, args.measure or ["COUNT(*)"], wh)
    if args.op == "rollup":
        cube = olap.rollup(cube, _need(args.target, "--target"))
    elif args.op == "drilldown":
        cube = olap.drilldown(cube, _need(args.target, "--target"), wh)
    elif args.op == "slice":
        cube = olap.slice_dice(cube, _parse_member_filters(args.member, cube))
        unknown = cube.metadata.get("unknown_members")
        if unknown:
            print(f"warning: unknown members {unknown}", file=sys.stderr)
    elif args.op == "pivot":
        order = args.order.split(",") if args.order else None
        grid = olap.pivot(cube, order, args.measure_index)
        if args.transpose:
            grid = grid.transpose()
        sys.stdout.write(grid.to_csv())
        return
    _emit(cube.to_result(), args.format)


def _need(value, flag):
    if value is None:
        raise UsageError(f"this operation needs {flag}")
    return value


def cmd_route(args, cfg):
    from .router import HotGet, HotScan, hot_upsert, route_and_execute
    wh = _warehouse(cfg, must_exist=not (args.get or args.scan or args.upsert))
    tiers = _tiers(cfg, wh)
    if args.upsert:
        collection, doc_id, body = args.upsert
        version = hot_upsert(tiers, collection, doc_id, json.loads(body))
        print(f"{collection}/{doc_id} version {version}", file=sys.stderr)
        return
    if args.get:
        request = HotGet(*args.get)
    elif args.scan:
        where = tuple((k, _json_value(v)) for k, v in (w.split("=", 1) for w in args.where or ()))
        request = HotScan(args.scan, where, args.now, args.window)
    else:
        request = _read_sql(args)
    result, trace = route_and_execute(request, tiers)
    _trace_log(cfg, trace)
    _emit(result, args.format)


def _json_value(text):
    try:
        return json.loads(text)
    except ValueError:
        return text


def cmd_sync(args, cfg):
    from .router import run_due_syncs, run_sync
    if cfg.routing_config is None:
        raise UsageError("sync needs --config with sync_jobs")
    wh = _warehouse(cfg)
    tiers = _tiers(cfg, wh)
    now = time.time()
    if args.force:
        done = {j.name: run_sync(j, tiers, now) for j in tiers.config.sync_jobs}
    else:
        done = run_due_syncs(tiers, now)
    state = cfg.root / "sync_state.json"
    state.write_text(json.dumps({j.name: j.last_run for j in tiers.config.sync_jobs}), encoding="utf-8")
    sys.stdout.write(json.dumps(done, sort_keys=True) + "\n")


def cmd_bench(args, cfg):
    from . import bench
    from .schema import build_default_schema
    wh = _warehouse(cfg)
    out = Path(args.out)
    suite = bench.generate_query_suite(cfg.seed, build_default_schema(), wh)
    out.mkdir(parents=True, exist_ok=True)
    (out / "suite.json").write_text(json.dumps(bench.SuiteFile.from_suite(cfg.seed, suite).__dict__,
                                               indent=1), encoding="utf-8")

    def progress(qid, recs):
        log.info("query %d: %s", qid, ", ".join(f"{r.engine} {r.avg:.4f}s" for r in recs))
    records = bench.run_benchmark(suite, reps=args.reps, warehouse=wh, progress=progress)
    bench.write_timings(records, out / "timings.csv")
    report = bench.compute_speedups(records)
    bench.emit_report(report, out)
    for g in report.per_group:
        print(f"group {g.group}: {g.times!r}", file=sys.stderr)
    print(f"overall: {report.overall_times!r}", file=sys.stderr)


def cmd_snapshot(args, cfg):
    wh = _warehouse(cfg)
    sys.stdout.write(wh.snapshot() + "\n")


def cmd_recover(args, cfg):
    wh = _warehouse(cfg)
    wh.recover(args.id)
    print(f"recovered snapshot {args.id}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--root", help="warehouse root (default $AGRIDWH_ROOT or ./warehouse)")
    common.add_argument("--config", help="routing config JSON (recency window, sync jobs)")
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    fmt = _Parser(add_help=False)
    fmt.add_argument("--format", choices=["csv", "json", "table"], default="csv")
    sqlp = _Parser(add_help=False)
    sqlp.add_argument("--sql", help="query text")
    sqlp.add_argument("--file", help="file holding the query text")

    p = _Parser(prog="agridwh", description="Agricultural data warehouse toolkit.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser, metavar="<command>")

    s = sub.add_parser("gen-data", parents=[common], help="write synthetic source datasets")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--datasets", type=int, default=29)
    s.add_argument("--rows-per-fact", type=int, default=1000)
    s.add_argument("--overlap", type=float, default=0.3)
    s.add_argument("--bad-fk-fraction", type=float, default=0.0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_gen_data)

    s = sub.add_parser("etl", parents=[common], help="stage, conform and load source datasets")
    s.add_argument("--source", required=True)
    s.add_argument("--partition-size", type=int, default=None)
    s.set_defaults(func=cmd_etl)

    s = sub.add_parser("query", parents=[common, fmt, sqlp], help="run a SQL query")
    s.add_argument("--engine", choices=["analytic", "naive", "auto"], default="analytic")
    s.add_argument("--explain", action="store_true", help="print the physical plan to stderr")
    s.set_defaults(func=cmd_query)

    s = sub.add_parser("cube", parents=[common, fmt], help="build a cube and apply an OLAP operation")
    s.add_argument("op", choices=["build", "rollup", "drilldown", "slice", "pivot"])
    s.add_argument("--fact", default="FieldFact")
    s.add_argument("--axis", action="append", required=True, help="hierarchy@level, repeatable")
    s.add_argument("--measure", action="append", help="AGG(measure), repeatable; default COUNT(*)")
    s.add_argument("--target", help="axis (hierarchy) for rollup or drilldown")
    s.add_argument("--member", action="append", help="hierarchy=m1,m2 for slice, repeatable")
    s.add_argument("--order", help="comma-separated hierarchies for pivot rows then columns")
    s.add_argument("--measure-index", type=int, default=0)
    s.add_argument("--transpose", action="store_true")
    s.set_defaults(func=cmd_cube)

    s = sub.add_parser("route", parents=[common, fmt, sqlp], help="execute a request through the router")
    s.add_argument("--get", nargs=2, metavar=("COLLECTION", "DOC_ID"))
    s.add_argument("--scan", metavar="COLLECTION")
    s.add_argument("--where", action="append", help="field=value equality for --scan, repeatable")
    s.add_argument("--now", type=float, default=None)
    s.add_argument("--window", type=float, default=None, help="recency window in seconds")
    s.add_argument("--upsert", nargs=3, metavar=("COLLECTION", "DOC_ID", "JSON"))
    s.set_defaults(func=cmd_route)

    s = sub.add_parser("sync", parents=[common], help="refresh hot collections from warehouse queries")
    s.add_argument("--force", action="store_true", help="run every job regardless of its interval")
    s.set_defaults(func=cmd_sync)

    s = sub.add_parser("bench", parents=[common], help="run the query-group benchmark")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--reps", type=int, default=3)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("snapshot", parents=[common], help="freeze the columnar and hot tiers")
    s.set_defaults(func=cmd_snapshot)

    s = sub.add_parser("recover", parents=[common], help="restore a snapshot")
    s.add_argument("--id", required=True)
    s.set_defaults(func=cmd_recover)
    return p


def _user_errors():
    from .bench import EmptyWarehouseError
    from .etl import EtlError
    from .olap import OlapError
    from .query import QueryError
    from .router import RouterError
    from .storage import StagingError, StorageError
    return (UsageError, QueryError, OlapError, RouterError, EtlError, EmptyWarehouseError,
            StorageError, StagingError, FileNotFoundError, json.JSONDecodeError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return 1
    except SystemExit as e:  # --help
        return int(e.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(message)s")
    cfg = _config(args)
    try:
        args.func(args, cfg)
    except _user_errors() as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:  # noqa: BLE001
        log.exception("internal error")
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
