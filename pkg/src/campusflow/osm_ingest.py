"""OpenStreetMap XML to road network: parse, clip, build, simplify.

Only ``node`` and ``way`` elements matter; relations and everything else are
skipped.  Way geometry is taken as given after clipping.
"""

from __future__ import annotations

import logging
import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field

from .config import DEFAULTS, ClassDefaults
from .netgraph import LinkRecord, NetworkError, NetworkGraph, NodeRecord, TurnMovement

log = logging.getLogger(__name__)

MIN_LINK_M = 1.0


class OsmParseError(ValueError):
    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte offset {byte_offset})")
        self.byte_offset = byte_offset


@dataclass
class OsmWay:
    id: int
    nodes: list[int]
    tags: dict[str, str]
    part: int = 0


@dataclass
class RawOsm:
    nodes: dict[int, tuple[float, float, dict[str, str]]] = field(default_factory=dict)
    ways: list[OsmWay] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


@dataclass(frozen=True)
class BoundingBox:
    min_lon: float
    min_lat: float
    max_lon: float
    max_lat: float

    def __post_init__(self):
        if not (self.min_lon < self.max_lon and self.min_lat < self.max_lat):
            raise ValueError(f"bounding box {self} is not well ordered")

    @classmethod
    def parse(cls, text: str) -> BoundingBox:
        """From ``"min_lon,min_lat,max_lon,max_lat"``."""
        parts = [p.strip() for p in text.split(",")]
        if len(parts) != 4:
            raise ValueError(f"bbox needs four comma-separated numbers, got {text!r}")
        return cls(*(float(p) for p in parts))

    def contains(self, lon: float, lat: float) -> bool:
        return self.min_lon <= lon <= self.max_lon and self.min_lat <= lat <= self.max_lat


# the study area around North Campus
STUDY_AREA = BoundingBox(77.202, 28.6782, 77.218, 28.6975)


def _byte_offset(document: bytes, line: int, column: int) -> int:
    lines = document.split(b"\n")
    return sum(len(ln) + 1 for ln in lines[:line - 1]) + column


def _tags(elem) -> dict[str, str]:
    return {t.get("k"): t.get("v", "") for t in elem.findall("tag")}


def parse_osm(document: bytes) -> RawOsm:
    """Nodes and highway-tagged ways of an OSM XML document."""
    try:
        root = ET.fromstring(document)
    except ET.ParseError as exc:
        line, col = exc.position
        raise OsmParseError(f"malformed OSM XML: {exc.msg if hasattr(exc, 'msg') else exc}",
                            _byte_offset(document, line, col)) from exc
    raw = RawOsm()
    for el in root.iter("node"):
        raw.nodes[int(el.get("id"))] = (float(el.get("lon")), float(el.get("lat")), _tags(el))
    for el in root.iter("way"):
        tags = _tags(el)
        if "highway" not in tags:
            continue
        wid = int(el.get("id"))
        refs = []
        for nd in el.findall("nd"):
            ref = int(nd.get("ref"))
            if ref in raw.nodes:
                refs.append(ref)
            else:
                raw.warnings.append(f"way {wid}: undeclared node {ref} dropped")
        raw.ways.append(OsmWay(wid, refs, tags))
    for w in raw.warnings:
        log.warning(w)
    return raw


def filter_bbox(raw: RawOsm, bbox: BoundingBox) -> RawOsm:
    """Keep nodes inside ``bbox``; split ways into runs of surviving nodes."""
    nodes = {nid: rec for nid, rec in raw.nodes.items() if bbox.contains(rec[0], rec[1])}
    ways = []
    for w in raw.ways:
        runs, cur = [], []
        for ref in w.nodes:
            if ref in nodes:
                cur.append(ref)
            else:
                runs.append(cur)
                cur = []
        runs.append(cur)
        runs = [r for r in runs if len(r) >= 2]
        for k, run in enumerate(runs):
            ways.append(OsmWay(w.id, run, dict(w.tags), k))
    return RawOsm(nodes, ways, list(raw.warnings))


def haversine_length(a: tuple[float, float], b: tuple[float, float]) -> float:
    """Great-circle distance in metres between two (lon, lat) points."""
    lon1, lat1 = map(math.radians, a)
    lon2, lat2 = map(math.radians, b)
    h = (math.sin((lat2 - lat1) / 2) ** 2
         + math.cos(lat1) * math.cos(lat2) * math.sin((lon2 - lon1) / 2) ** 2)
    # symmetric in a and b: sin^2 is even and the cosine product commutes
    return 2 * DEFAULTS.earth_radius_m * math.asin(min(1.0, math.sqrt(h)))


_SPEED = re.compile(r"^\s*(\d+(?:\.\d+)?)\s*(mph|km/h|kmh|kph)?\s*$")


def parse_maxspeed(value: str) -> float | None:
    """km/h from an OSM maxspeed tag, or None if unparseable."""
    m = _SPEED.match(value or "")
    if not m:
        return None
    v = float(m.group(1))
    return v * 1.609344 if m.group(2) == "mph" else v


def _int_tag(tags, key) -> int | None:
    try:
        n = int(float(tags[key].split(";")[0]))
    except (KeyError, ValueError):
        return None
    return n if n >= 1 else None


def _oneway(tags) -> int:
    """1 forward only, -1 reverse only, 0 both directions."""
    v = tags.get("oneway", "").lower()
    if v in ("yes", "true", "1"):
        return 1
    if v == "-1" or v == "reverse":
        return -1
    if tags.get("junction") == "roundabout" or tags.get("highway") == "motorway":
        return 1 if v != "no" else 0
    return 0


def build_graph(raw: RawOsm, defaults: ClassDefaults | None = None,
                allow_uturns: bool = False) -> NetworkGraph:
    """Directed network from clipped OSM data.

    Each consecutive node pair of a way becomes one link per permitted
    direction.  ``maxspeed`` and ``lanes`` tags override class defaults; on
    two-way roads ``lanes`` counts both directions and is split evenly unless
    ``lanes:forward``/``lanes:backward`` say otherwise.
    """
    defaults = defaults or ClassDefaults()
    net = NetworkGraph()
    used: set[int] = set()
    pieces = []
    for w in sorted(raw.ways, key=lambda w: (w.id, w.part)):
        cls = defaults.resolve(w.tags["highway"])
        if cls is None:
            continue
        if cls not in defaults.table:
            raise NetworkError(f"way {w.id}: road class {w.tags['highway']!r} has no defaults")
        pieces.append((w, cls))
        used.update(w.nodes)
    for nid in sorted(used):
        lon, lat, tags = raw.nodes[nid]
        net.add_node(NodeRecord(nid, lon, lat, tags.get("highway") == "traffic_signals",
                                tags.get("name")))

    next_id = 1
    for w, cls in pieces:
        d = defaults.table[cls]
        kmh = parse_maxspeed(w.tags.get("maxspeed", "")) or d.speed_kmh
        speed = kmh * 1000.0 / 3600.0
        direction = _oneway(w.tags)
        total = _int_tag(w.tags, "lanes")
        if direction == 0:
            half = max(1, total // 2) if total else d.lanes
            fwd = _int_tag(w.tags, "lanes:forward") or half
            bwd = _int_tag(w.tags, "lanes:backward") or half
        else:
            fwd = bwd = total or d.lanes
        for a, b in zip(w.nodes, w.nodes[1:]):
            if a == b:
                continue
            pa, pb = raw.nodes[a][:2], raw.nodes[b][:2]
            length = haversine_length(pa, pb)
            if length < MIN_LINK_M:
                log.warning("way %s: segment %s-%s is %.3f m, lengthened to %g m",
                            w.id, a, b, length, MIN_LINK_M)
                length = MIN_LINK_M
            dirs = []
            if direction >= 0:
                dirs.append((a, b, fwd))
            if direction <= 0:
                dirs.append((b, a, bwd))
            for u, v, lanes in dirs:
                net.add_link(LinkRecord(next_id, u, v, length, speed, lanes,
                                        d.sat_flow_per_lane_vps, d.jam_density_per_lane_vpm,
                                        road_class=cls))
                next_id += 1
    return net.add_all_movements(allow_uturns)


def _same_kind(x: LinkRecord, y: LinkRecord) -> bool:
    return (x.road_class == y.road_class and x.free_flow_speed_mps == y.free_flow_speed_mps
            and x.lanes == y.lanes and x.sat_flow_per_lane_vps == y.sat_flow_per_lane_vps
            and x.jam_density_per_lane_vpm == y.jam_density_per_lane_vpm
            and x.wave_speed_overridden == y.wave_speed_overridden
            and (not x.wave_speed_overridden or x.backward_wave_speed_mps == y.backward_wave_speed_mps))


def _mergeable_pairs(net: NetworkGraph, nid: int):
    """(in, out) link pairs to fuse at ``nid``, or None if the node must stay."""
    node = net.nodes[nid]
    if node.signalized:
        return None
    ins, outs = net.in_links(nid), net.out_links(nid)
    if len(ins) == 1 and len(outs) == 1:
        pairs = [(ins[0], outs[0])]
    elif len(ins) == 2 and len(outs) == 2:
        pairs = []
        for lin in ins:
            onward = [lo for lo in outs if lo.to_node != lin.from_node]
            if len(onward) != 1:
                return None
            pairs.append((lin, onward[0]))
        if pairs[0][1].id == pairs[1][1].id:
            return None
    else:
        return None
    for lin, lout in pairs:
        if lin.from_node == lout.to_node or not _same_kind(lin, lout):
            return None
        mv = net.movement_between(lin.id, lout.id)
        if mv is None or mv.capacity_factor != 1.0:
            return None
    # no other movement may start or end at these links through this node
    through = {net.movement_between(a.id, b.id).id for a, b in pairs}
    for mid, mv in net.movements.items():
        touches = net.links[mv.in_link].to_node == nid
        if touches and mid not in through:
            return None
    return pairs


def _fuse(net: NetworkGraph, nid: int, pairs) -> NetworkGraph:
    out = NetworkGraph()
    removed_links = {l.id for pair in pairs for l in pair}
    merged = {}
    for lin, lout in pairs:
        merged[lin.id] = LinkRecord(
            lin.id, lin.from_node, lout.to_node, lin.length_m + lout.length_m,
            lin.free_flow_speed_mps, lin.lanes, lin.sat_flow_per_lane_vps,
            lin.jam_density_per_lane_vpm,
            lin.backward_wave_speed_mps if lin.wave_speed_overridden else None,
            lin.road_class)
    # out link id -> surviving merged id
    rename = {lout.id: lin.id for lin, lout in pairs}
    for n in net.nodes.values():
        if n.id != nid:
            out.add_node(n)
    for l in sorted(net.links.values(), key=lambda l: l.id):
        if l.id in merged:
            out.add_link(merged[l.id])
        elif l.id not in removed_links:
            out.add_link(l)
    for mid in sorted(net.movements):
        mv = net.movements[mid]
        if net.links[mv.in_link].to_node == nid:
            continue
        a = rename.get(mv.in_link, mv.in_link)
        b = mv.out_link
        out.add_movement(TurnMovement(mid, a, b, mv.capacity_factor))
    return out


def simplify_chains(net: NetworkGraph) -> NetworkGraph:
    """Remove pass-through nodes whose two sides are the same kind of road.

    A node goes when it is unsignalized and, in each travel direction, has
    one link in and one link out with identical attributes and a plain
    through movement.  Merged links keep the upstream link's id and the sum
    of the lengths.  Repeats until nothing changes, so the result is a fixed
    point.
    """
    cur = net.copy()
    changed = True
    while changed:
        changed = False
        for nid in sorted(cur.nodes):
            pairs = _mergeable_pairs(cur, nid)
            if pairs:
                cur = _fuse(cur, nid, pairs)
                changed = True
    return cur


def ingest(document: bytes, bbox: BoundingBox = STUDY_AREA, defaults: ClassDefaults | None = None,
           simplify: bool = True, allow_uturns: bool = False) -> NetworkGraph:
    """Full pipeline: parse, clip, build and optionally simplify."""
    raw = filter_bbox(parse_osm(document), bbox)
    net = build_graph(raw, defaults, allow_uturns)
    return simplify_chains(net) if simplify else net
