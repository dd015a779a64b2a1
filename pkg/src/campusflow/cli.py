"""Command-line entry point: ingest, run, compare, optimize, report.

Exit status: 0 success, 1 usage error, 2 invalid input, 3 runtime fault.
Result directories are written to a temporary sibling first and renamed into
place, so a failed command never leaves a partial result set behind.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

from . import __version__
from .config import ClassDefaults
from .demand import load_demand
from .metrics import (SUMMARY_FIELDS, all_series, fmt, links_csv, read_csv_rows, state_csv,
                      summarize, summary_csv, trips_csv)
from .netgraph import load_network, network_to_dict, validate_network
from .optimizer import OptimizerConfig, PlanVector, Problem, hill_climb
from .osm_ingest import BoundingBox, ingest
from .scenarios import (COMPARED_METRICS, CompositionSpec, compare_runs, compose_sequential,
                        load_aliases, load_scenario_file, run_scenario, summary_from_row)
from .signals import crossing_to_dict, load_signals, plan_to_dict, validate_plan
from .simcore import KernelFault

log = logging.getLogger("campusflow")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="campusflow", description="Mesoscopic campus traffic simulation.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ing = sub.add_parser("ingest", help="build a network file from OSM XML")
    ing.add_argument("--osm", required=True, type=Path)
    ing.add_argument("--bbox", required=True, help="min_lon,min_lat,max_lon,max_lat")
    ing.add_argument("--out", required=True, type=Path)
    ing.add_argument("--class-defaults", type=Path, help="JSON overriding road class defaults")
    ing.add_argument("--no-simplify", action="store_true")
    ing.add_argument("--allow-uturns", action="store_true")

    def sim_inputs(sp):
        sp.add_argument("--net", required=True, type=Path)
        sp.add_argument("--demand", required=True, type=Path)
        sp.add_argument("--signals", required=True, type=Path)
        sp.add_argument("--scenario", action="append", default=[], type=Path,
                        help="scenario file; repeat to compose in order")
        sp.add_argument("--gap", type=float, default=0.0, help="seconds between composed scenarios")
        sp.add_argument("--aliases", type=Path, help="JSON map of node names to ids")
        sp.add_argument("--horizon", type=float, default=3600.0)
        sp.add_argument("--seed", type=int, help="random arrivals with this seed")
        sp.add_argument("--out", required=True, type=Path)

    run = sub.add_parser("run", help="simulate and write result tables")
    sim_inputs(run)
    run.add_argument("--event-log", action="store_true", help="also write events.log")
    run.add_argument("--incomplete", choices=("exclude", "truncate"), default="exclude")

    cmp_ = sub.add_parser("compare", help="compare two run directories")
    cmp_.add_argument("--baseline", required=True, type=Path)
    cmp_.add_argument("--variant", required=True, type=Path)
    cmp_.add_argument("--out", required=True, type=Path)

    opt = sub.add_parser("optimize", help="search signal splits and offsets")
    sim_inputs(opt)
    opt.add_argument("--budget", type=int, help="evaluation budget (overrides --config)")
    opt.add_argument("--config", type=Path, help="optimizer JSON config")
    opt.add_argument("--fixed-offsets", action="store_true", help="search green splits only")

    rep = sub.add_parser("report", help="print the top delay hotspots of a run")
    rep.add_argument("--run", required=True, type=Path)
    rep.add_argument("--top", type=int, default=5)
    return p


# --- helpers ---------------------------------------------------------------

def _seed_line(seed) -> str:
    return f"# seed={'none' if seed is None else seed}\r\n"


def _manifest(files: dict[str, bytes]) -> bytes:
    lines = [f"{hashlib.sha256(data).hexdigest()}  {name}\n" for name, data in sorted(files.items())]
    return "".join(lines).encode("ascii")


def write_result_dir(out: Path, files: dict[str, bytes]) -> None:
    """Write ``files`` plus MANIFEST into ``out`` all at once."""
    if out.exists() and (not out.is_dir() or any(out.iterdir())):
        raise InputError(f"output directory {out} exists and is not empty")
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{out.name}.", dir=out.parent))
    try:
        for name, data in files.items():
            (tmp / name).write_bytes(data)
        (tmp / "MANIFEST").write_bytes(_manifest(files))
        if out.exists():
            out.rmdir()
        os.replace(tmp, out)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise


def write_file_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _require_file(path: Path, what: str) -> None:
    if not path.is_file():
        raise InputError(f"{what} file not found: {path}")


def load_inputs(args):
    """Parse and validate every input file before any simulation."""
    for path, what in [(args.net, "network"), (args.demand, "demand"), (args.signals, "signals")]:
        _require_file(path, what)
    for path in args.scenario:
        _require_file(path, "scenario")
    if args.horizon <= 0:
        raise InputError("--horizon must be positive")
    net = load_network(args.net)
    problems = validate_network(net)
    if problems:
        raise InputError("invalid network: " + "; ".join(problems))
    aliases = {}
    if args.aliases:
        _require_file(args.aliases, "aliases")
        aliases = load_aliases(args.aliases)

    def resolve(ref):
        if isinstance(ref, str) and ref in aliases:
            return aliases[ref]
        try:
            return int(ref)
        except ValueError:
            raise InputError(f"unknown node reference {ref!r} in demand") from None

    base = load_demand(args.demand, resolve)
    plans, crossings = load_signals(args.signals, net)
    for plan in plans:
        problems = validate_plan(plan, net)
        if problems:
            raise InputError("invalid signal plan: " + "; ".join(problems))
    specs = [load_scenario_file(p, net, aliases) for p in args.scenario]
    scenario = compose_sequential(CompositionSpec(specs, args.gap)) if specs else None
    return net, base, plans, crossings, scenario


# --- commands --------------------------------------------------------------

def cmd_ingest(args) -> int:
    _require_file(args.osm, "OSM")
    try:
        bbox = BoundingBox.parse(args.bbox)
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    defaults = None
    if args.class_defaults:
        _require_file(args.class_defaults, "class defaults")
        defaults = ClassDefaults.from_dict(json.loads(args.class_defaults.read_text()))
    net = ingest(args.osm.read_bytes(), bbox, defaults, simplify=not args.no_simplify,
                 allow_uturns=args.allow_uturns)
    problems = validate_network(net)
    if problems:
        raise InputError("ingested network is invalid: " + "; ".join(problems))
    data = json.dumps(network_to_dict(net), indent=2, sort_keys=True) + "\n"
    write_file_atomic(args.out, data.encode("utf-8"))
    log.info("wrote %d nodes, %d links to %s", len(net.nodes), len(net.links), args.out)
    return EXIT_OK


def cmd_run(args) -> int:
    net, base, plans, crossings, scenario = load_inputs(args)
    mode = "deterministic" if args.seed is None else "poisson"
    result = run_scenario(net, base, plans, scenario, args.horizon, crossings=crossings,
                          mode=mode, seed=args.seed, record_events=args.event_log)
    summary = summarize(result, args.incomplete)
    head = _seed_line(args.seed)
    files = {
        "summary.csv": (head + summary_csv(summary)).encode("utf-8"),
        "trips.csv": (head + trips_csv(result.trips)).encode("utf-8"),
        "links.csv": (head + links_csv(summary)).encode("utf-8"),
        "state.csv": (head + state_csv(all_series(result))).encode("utf-8"),
    }
    if args.event_log:
        files["events.log"] = ("\n".join(result.event_log_lines()) + "\n").encode("utf-8")
    write_result_dir(args.out, files)
    log.info("%d trips completed, %d incomplete", summary.completed_trips, summary.incomplete_trips)
    return EXIT_OK


def _read_run(run_dir: Path, name: str) -> tuple[list[dict[str, str]], str]:
    path = run_dir / name
    _require_file(path, name)
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().strip()
    seed = first.split("=", 1)[1] if first.startswith("# seed=") else "none"
    return read_csv_rows(path), seed


def cmd_compare(args) -> int:
    (brow, *_), bseed = _read_run(args.baseline, "summary.csv")
    (vrow, *_), vseed = _read_run(args.variant, "summary.csv")
    for row, d in ((brow, args.baseline), (vrow, args.variant)):
        missing = [f for f in SUMMARY_FIELDS if f not in row]
        if missing:
            raise InputError(f"{d}/summary.csv lacks columns {missing}")
    report = compare_runs(summary_from_row(brow), summary_from_row(vrow))
    lines = [f"# seed=baseline:{bseed},variant:{vseed}\r\n",
             "metric,baseline,variant,abs_delta,rel_delta\r\n"]
    for m in COMPARED_METRICS:
        b, v, d, r = report.deltas[m]
        lines.append(",".join([m, fmt(b), fmt(v), fmt(d), fmt(r)]) + "\r\n")
    write_file_atomic(args.out, "".join(lines).encode("utf-8"))
    return EXIT_OK


def cmd_optimize(args) -> int:
    net, base, plans, crossings, scenario = load_inputs(args)
    cfg = OptimizerConfig()
    if args.config:
        _require_file(args.config, "optimizer config")
        cfg = OptimizerConfig.load(args.config)
    if args.budget is not None:
        if args.budget < 1:
            raise InputError("--budget must be >= 1")
        cfg.budget = args.budget
    if not plans:
        raise InputError("no signal plans to optimize")
    mode = "deterministic" if args.seed is None else "poisson"
    problem = Problem(net, base, scenario, args.horizon, cfg.incomplete_trip_penalty_s,
                      crossings, mode, args.seed)
    v0 = PlanVector.from_plans(plans, cfg.min_green_s,
                               optimize_offsets=cfg.optimize_offsets and not args.fixed_offsets)
    trace = hill_climb(problem, v0, cfg.step_schedule_s, cfg.budget)
    best = {"signals": [plan_to_dict(p) for p in trace.best.decode()],
            "crossings": [crossing_to_dict(w) for w in crossings],
            "objective_s": trace.best_objective,
            "initial_objective_s": trace.records[0].objective}
    files = {
        "trace.csv": (_seed_line(args.seed) + trace.to_csv()).encode("utf-8"),
        "best_plan.json": (json.dumps(best, indent=2, sort_keys=True) + "\n").encode("utf-8"),
    }
    write_result_dir(args.out, files)
    log.info("objective %.6g -> %.6g in %d evaluations",
             trace.records[0].objective, trace.best_objective, len(trace.records))
    return EXIT_OK


def cmd_report(args) -> int:
    if args.top < 1:
        raise InputError("--top must be >= 1")
    rows, _ = _read_run(args.run, "links.csv")
    ranked = sorted(rows, key=lambda r: (-float(r["total_delay_s"]), int(r["link_id"])))
    print("rank,link_id,total_delay_s,max_queue")
    for k, r in enumerate(ranked[:args.top], start=1):
        print(f"{k},{r['link_id']},{r['total_delay_s']},{r['max_queue']}")
    return EXIT_OK


COMMANDS = {"ingest": cmd_ingest, "run": cmd_run, "compare": cmd_compare,
            "optimize": cmd_optimize, "report": cmd_report}


def _configure_logging() -> None:
    level = LOG_LEVELS.get(os.environ.get("CAMPUSFLOW_LOG", "warn").lower(), logging.WARNING)
    logging.basicConfig(level=level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (InputError, ValueError, LookupError, OSError) as exc:
        print(f"campusflow {args.command}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except KernelFault as exc:
        print(f"campusflow {args.command}: internal fault: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - any other failure is a runtime fault
        log.debug("unhandled error", exc_info=True)
        print(f"campusflow {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
