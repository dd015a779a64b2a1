import json
from pathlib import Path

import pytest

import campusflow
from campusflow import fixtures
from campusflow.cli import main
from campusflow.demand import od_to_dict
from campusflow.metrics import read_csv_rows
from campusflow.netgraph import load_network, save_network, validate_network
from campusflow.signals import load_signals, signals_to_doc

DATA = Path(campusflow.__file__).parent / "data"
CAMPUS = ["--net", str(DATA / "north_campus_network.json"),
          "--demand", str(DATA / "north_campus_demand.json"),
          "--signals", str(DATA / "north_campus_signals.json"),
          "--aliases", str(DATA / "north_campus_aliases.json")]


def write_inputs(tmp_path, fx, ods):
    save_network(fx.net, tmp_path / "net.json")
    (tmp_path / "demand.json").write_text(json.dumps([od_to_dict(o) for o in ods]))
    (tmp_path / "signals.json").write_text(json.dumps(signals_to_doc(fx.plans, fx.crossings)))
    return ["--net", str(tmp_path / "net.json"), "--demand", str(tmp_path / "demand.json"),
            "--signals", str(tmp_path / "signals.json")]


def single_vehicle_args(tmp_path):
    from campusflow.demand import DemandProfile, ODPair
    fx = fixtures.single_link(1)
    # one vehicle: rate 1/10 veh/s over [0, 10) expands to a single departure at t=10
    return write_inputs(tmp_path, fx, [ODPair(1, 2, DemandProfile([(0.0, 10.0, 0.1)]))])


def test_run_single_vehicle(tmp_path):
    args = single_vehicle_args(tmp_path)
    assert main(["run", *args, "--out", str(tmp_path / "out"), "--event-log"]) == 0
    (row,) = read_csv_rows(tmp_path / "out" / "summary.csv")
    assert float(row["total_delay_s"]) == 0.0
    assert row["completed_trips"] == "1" and row["incomplete_trips"] == "0"
    (trip,) = read_csv_rows(tmp_path / "out" / "trips.csv")
    assert float(trip["depart_s"]) == 10.0 and float(trip["arrive_s"]) == 20.0
    assert (tmp_path / "out" / "summary.csv").read_bytes().startswith(b"# seed=none\r\n")
    names = sorted(p.name for p in (tmp_path / "out").iterdir())
    assert names == ["MANIFEST", "events.log", "links.csv", "state.csv", "summary.csv", "trips.csv"]


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main(["run", "--demand", "x", "--signals", "y", "--out", str(tmp_path / "o")]) == 1
    assert "--net" in capsys.readouterr().err
    assert main([]) == 1
    assert main(["bogus"]) == 1
    assert not (tmp_path / "o").exists()


def test_input_errors_exit_2(tmp_path, capsys):
    args = single_vehicle_args(tmp_path)
    missing = ["run", "--net", str(tmp_path / "nope.json"), *args[2:], "--out", str(tmp_path / "o")]
    assert main(missing) == 2
    assert "not found" in capsys.readouterr().err
    assert main(["run", *args, "--horizon", "-1", "--out", str(tmp_path / "o")]) == 2
    (tmp_path / "bad.json").write_text("{")
    assert main(["run", "--net", str(tmp_path / "bad.json"), *args[2:], "--out", str(tmp_path / "o")]) == 2
    assert main(["ingest", "--osm", str(DATA / "north_campus.osm"), "--bbox", "1,2,3",
                 "--out", str(tmp_path / "n.json")]) == 2
    assert not (tmp_path / "o").exists() and not (tmp_path / "n.json").exists()


def test_non_empty_output_dir_rejected(tmp_path):
    args = single_vehicle_args(tmp_path)
    out = tmp_path / "out"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    assert main(["run", *args, "--out", str(out)]) == 2
    assert [p.name for p in out.iterdir()] == ["keep.txt"]
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["run", *args, "--out", str(empty)]) == 0


def test_no_partial_output_on_late_failure(tmp_path):
    # the scenario references a node that does not exist; validation fails before any write
    args = single_vehicle_args(tmp_path)
    bad = tmp_path / "scenario.json"
    bad.write_text(json.dumps({"name": "bad", "window": {"start_s": 0, "end_s": 60},
                               "demand_overlays": [{"origin": 1, "destination": 77,
                                                    "profile": [{"start_s": 0, "end_s": 60,
                                                                 "rate_vph": 60}]}]}))
    assert main(["run", *args, "--scenario", str(bad), "--out", str(tmp_path / "out")]) == 2
    assert sorted(p.name for p in tmp_path.iterdir()) == ["demand.json", "net.json", "scenario.json",
                                                           "signals.json"]


def test_ingest_matches_packaged_network(tmp_path):
    out = tmp_path / "net.json"
    assert main(["ingest", "--osm", str(DATA / "north_campus.osm"),
                 "--bbox", "77.202,28.6782,77.218,28.6975", "--out", str(out)]) == 0
    assert out.read_bytes() == (DATA / "north_campus_network.json").read_bytes()
    assert validate_network(load_network(out)) == []
    raw = tmp_path / "raw.json"
    assert main(["ingest", "--osm", str(DATA / "north_campus.osm"), "--no-simplify",
                 "--bbox", "77.202,28.6782,77.218,28.6975", "--out", str(raw)]) == 0
    assert len(load_network(raw).nodes) > len(load_network(out).nodes)


def test_campus_run_is_deterministic(tmp_path):
    scen = ["--scenario", str(DATA / "scenarios" / "S1_ramjas_dismissal.json")]
    for k in (1, 2):
        assert main(["run", *CAMPUS, *scen, "--out", str(tmp_path / f"r{k}")]) == 0
    for name in ("MANIFEST", "summary.csv", "trips.csv", "links.csv", "state.csv"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()
    for k in (3, 4):
        assert main(["run", *CAMPUS, "--seed", "7", "--out", str(tmp_path / f"r{k}")]) == 0
    assert (tmp_path / "r3" / "MANIFEST").read_bytes() == (tmp_path / "r4" / "MANIFEST").read_bytes()
    assert (tmp_path / "r3" / "trips.csv").read_bytes().startswith(b"# seed=7\r\n")


def test_every_template_runs(tmp_path):
    for k, path in enumerate(sorted((DATA / "scenarios").glob("*.json"))):
        assert main(["run", *CAMPUS, "--scenario", str(path), "--out", str(tmp_path / f"r{k}")]) == 0


def test_compare_and_report(tmp_path, capsys):
    assert main(["run", *CAMPUS, "--out", str(tmp_path / "base")]) == 0
    assert main(["run", *CAMPUS, "--scenario", str(DATA / "scenarios" / "S3_commuter_flow.json"),
                 "--out", str(tmp_path / "var")]) == 0
    out = tmp_path / "cmp.csv"
    assert main(["compare", "--baseline", str(tmp_path / "base"), "--variant", str(tmp_path / "var"),
                 "--out", str(out)]) == 0
    text = out.read_text()
    assert text.startswith("# seed=baseline:none,variant:none\n")
    rows = {r["metric"]: r for r in read_csv_rows(out)}
    d = rows["total_delay_s"]
    assert float(d["abs_delta"]) == pytest.approx(float(d["variant"]) - float(d["baseline"]), rel=1e-5)
    capsys.readouterr()
    assert main(["report", "--run", str(tmp_path / "var"), "--top", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "rank,link_id,total_delay_s,max_queue" and len(lines) == 4
    delays = [float(l.split(",")[2]) for l in lines[1:]]
    assert delays == sorted(delays, reverse=True)
    assert main(["report", "--run", str(tmp_path / "nowhere")]) == 2


def test_optimize_writes_trace_and_plan(tmp_path):
    out = tmp_path / "opt"
    assert main(["optimize", *CAMPUS, "--budget", "6", "--fixed-offsets", "--out", str(out)]) == 0
    rows = read_csv_rows(out / "trace.csv")
    assert 1 <= len(rows) <= 6
    assert not any(k.endswith("_offset") for k in rows[0])
    best = json.loads((out / "best_plan.json").read_text())
    assert best["objective_s"] <= best["initial_objective_s"]
    assert min(float(r["objective"]) for r in rows) == pytest.approx(best["objective_s"], rel=1e-5)
    plans, _ = load_signals(out / "best_plan.json", load_network(DATA / "north_campus_network.json"))
    assert len(plans) == 3
    assert main(["optimize", *CAMPUS, "--budget", "0", "--out", str(tmp_path / "o2")]) == 2
