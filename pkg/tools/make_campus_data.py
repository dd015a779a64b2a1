"""Regenerate the illustrative North Campus data files under src/campusflow/data.

The OSM extract is synthetic: a 7 x 7 street grid laid inside the study
area with a few named gates.  All demand rates are placeholders chosen to
produce visible congestion, not observations.

    python3 tools/make_campus_data.py
"""

from __future__ import annotations

import json
from pathlib import Path
from xml.sax.saxutils import quoteattr

from campusflow.netgraph import network_to_dict
from campusflow.osm_ingest import STUDY_AREA, ingest

DATA = Path(__file__).resolve().parents[1] / "src" / "campusflow" / "data"

COLS, ROWS = 7, 7
LON0, DLON = 77.2040, 0.0020
LAT0, DLAT = 28.6810, 0.0025

SIGNALS = {(3, 1), (3, 3), (3, 5)}
NAMES = {
    (6, 1): ("ramjas_gate", "Ramjas College Gate"),
    (0, 5): ("miranda_gate", "Miranda House Gate"),
    (3, 0): ("malkaganj", "Malkaganj Chowk"),
    (3, 6): ("vishvavidyalaya_metro", "Vishvavidyalaya Metro"),
    (6, 5): ("arts_faculty", "Arts Faculty"),
    (0, 1): ("patel_chest", "Patel Chest Junction"),
}


def nid(row: int, col: int) -> int:
    return 1000 + 10 * row + col


def osm_document() -> bytes:
    nodes = []
    for r in range(ROWS):
        for c in range(COLS):
            tags = {}
            if (r, c) in SIGNALS:
                tags["highway"] = "traffic_signals"
            if (r, c) in NAMES:
                tags["name"] = NAMES[(r, c)][1]
            nodes.append((nid(r, c), LON0 + DLON * c, LAT0 + DLAT * r, tags))
    # beyond the study area, cut off by clipping
    nodes += [(900, 77.2000, LAT0 + 3 * DLAT, {}), (901, 77.2200, LAT0 + 3 * DLAT, {}),
              (902, LON0 + 3 * DLON, 28.6990, {})]
    # building outline and a footpath, both dropped
    nodes += [(950, 77.2090, 28.6830, {}), (951, 77.2095, 28.6830, {}),
              (952, 77.2095, 28.6835, {}), (953, 77.2090, 28.6835, {})]

    row = lambda r, cs: [nid(r, c) for c in cs]
    col = lambda c, rs: [nid(r, c) for r in rs]
    ways = [
        (1, [900] + row(3, range(COLS)) + [901],
         {"highway": "primary", "name": "Chhatra Marg", "lanes": "4", "maxspeed": "40"}),
        (2, row(0, range(COLS)), {"highway": "residential"}),
        (3, row(6, range(COLS)), {"highway": "residential", "name": "Cavalry Lines"}),
        (4, row(1, range(0, 4)), {"highway": "residential"}),
        (5, row(5, range(3, COLS)), {"highway": "residential"}),
        (6, col(0, range(ROWS)), {"highway": "residential"}),
        (7, col(1, range(ROWS)), {"highway": "residential"}),
        (8, col(2, range(ROWS)), {"highway": "residential"}),
        (9, col(3, range(ROWS)) + [902], {"highway": "tertiary", "name": "University Road"}),
        (10, col(4, range(ROWS)), {"highway": "residential"}),
        (11, col(5, range(ROWS)), {"highway": "residential"}),
        (12, col(6, range(ROWS)), {"highway": "service", "oneway": "yes"}),
        (13, [950, 951, 952, 953, 950], {"building": "yes"}),
        (14, [nid(1, 1), nid(2, 2)], {"highway": "footway"}),
    ]
    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           '<osm version="0.6" generator="make_campus_data">']
    for i, lon, lat, tags in nodes:
        if tags:
            out.append(f'  <node id="{i}" lat="{lat:.7f}" lon="{lon:.7f}">')
            for k, v in sorted(tags.items()):
                out.append(f"    <tag k={quoteattr(k)} v={quoteattr(v)}/>")
            out.append("  </node>")
        else:
            out.append(f'  <node id="{i}" lat="{lat:.7f}" lon="{lon:.7f}"/>')
    for wid, refs, tags in ways:
        out.append(f'  <way id="{wid}">')
        out += [f'    <nd ref="{r}"/>' for r in refs]
        out += [f"    <tag k={quoteattr(k)} v={quoteattr(v)}/>" for k, v in sorted(tags.items())]
        out.append("  </way>")
    out.append("</osm>")
    return ("\n".join(out) + "\n").encode("utf-8")


def signal_plans(net) -> list[dict]:
    plans = []
    for k, (r, c) in enumerate(sorted(SIGNALS), start=1):
        node = nid(r, c)
        main, side = [], []
        for mid in sorted(net.movements):
            mv = net.movements[mid]
            lin = net.links[mv.in_link]
            if lin.to_node != node:
                continue
            (main if lin.road_class == "primary" else side).append(mid)
        plans.append({"signal_id": k, "node": node, "cycle_s": 60.0, "offset_s": 10.0 * (k - 1),
                      "lost_time_s": 3.0,
                      "phases": [{"green_s": 27.0, "movements": main},
                                 {"green_s": 27.0, "movements": side}]})
    return plans


def od(o, d, *segments):
    return {"origin": o, "destination": d,
            "profile": [{"start_s": a, "end_s": b, "rate_vph": r} for a, b, r in segments]}


def scenarios(net) -> dict[str, dict]:
    note = "illustrative rates; replace with local counts"
    # pedestrians at the Miranda House gate interrupt every movement through that node
    gate = nid(0, 5)
    crossing_moves = sorted(mid for mid, mv in net.movements.items()
                            if net.links[mv.in_link].to_node == gate)
    return {
        "S1_ramjas_dismissal": {
            "name": "S1_ramjas_dismissal", "illustrative": True, "note": note,
            "window": {"start_s": 1200.0, "end_s": 2100.0},
            "demand_overlays": [
                od("ramjas_gate", "vishvavidyalaya_metro", (0.0, 600.0, 540.0)),
                od("ramjas_gate", "malkaganj", (0.0, 600.0, 240.0)),
            ],
        },
        "S2_miranda_dismissal": {
            "name": "S2_miranda_dismissal", "illustrative": True, "note": note,
            "window": {"start_s": 1200.0, "end_s": 2100.0},
            "demand_overlays": [
                od("miranda_gate", "vishvavidyalaya_metro", (0.0, 600.0, 360.0)),
                od("miranda_gate", "malkaganj", (0.0, 600.0, 240.0)),
            ],
            "crossings": [{"movement": m, "period_s": 90.0, "active_s": 20.0, "factor": 0.0}
                          for m in crossing_moves],
        },
        "S3_commuter_flow": {
            "name": "S3_commuter_flow", "illustrative": True, "note": note,
            "window": {"start_s": 0.0, "end_s": 1800.0},
            "demand_overlays": [
                od("malkaganj", "vishvavidyalaya_metro", (0.0, 1800.0, 420.0)),
                od("vishvavidyalaya_metro", "malkaganj", (0.0, 1800.0, 300.0)),
            ],
        },
        "S4_festival_influx": {
            "name": "S4_festival_influx", "illustrative": True, "note": note,
            "window": {"start_s": 600.0, "end_s": 2400.0},
            "demand_overlays": [
                od("vishvavidyalaya_metro", "arts_faculty", (0.0, 900.0, 480.0), (900.0, 1800.0, 240.0)),
                od("malkaganj", "arts_faculty", (0.0, 1800.0, 240.0)),
            ],
            "capacity_overrides": [
                {"movement": m, "factor": 0.6} for m in crossing_moves[:1]
            ],
        },
        "S5_exam_day": {
            "name": "S5_exam_day", "illustrative": True, "note": note,
            "window": {"start_s": 0.0, "end_s": 3600.0},
            "demand_overlays": [
                od("malkaganj", "arts_faculty", (0.0, 600.0, 480.0)),
                od("vishvavidyalaya_metro", "arts_faculty", (0.0, 600.0, 420.0)),
                od("arts_faculty", "vishvavidyalaya_metro", (2400.0, 3000.0, 540.0)),
                od("arts_faculty", "malkaganj", (2400.0, 3000.0, 360.0)),
            ],
        },
    }


def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def main() -> None:
    (DATA / "scenarios").mkdir(parents=True, exist_ok=True)
    doc = osm_document()
    (DATA / "north_campus.osm").write_bytes(doc)
    net = ingest(doc, STUDY_AREA)
    write_json(DATA / "north_campus_network.json", network_to_dict(net))
    write_json(DATA / "north_campus_signals.json", {"signals": signal_plans(net)})
    write_json(DATA / "north_campus_aliases.json", {alias: nid(*rc) for rc, (alias, _) in NAMES.items()})
    write_json(DATA / "north_campus_demand.json", [
        od("patel_chest", "vishvavidyalaya_metro", (0.0, 3600.0, 180.0)),
        od("malkaganj", "miranda_gate", (0.0, 3600.0, 120.0)),
        od("vishvavidyalaya_metro", "ramjas_gate", (0.0, 3600.0, 150.0)),
    ])
    for name, sc in scenarios(net).items():
        write_json(DATA / "scenarios" / f"{name}.json", sc)
    print(f"{len(net.nodes)} nodes, {len(net.links)} links, {len(net.movements)} movements")


if __name__ == "__main__":
    main()
