"""Directed road network with triangular fundamental-diagram link attributes.

Links carry per-lane saturation flow and jam density; the backward wave speed
follows from the triangular diagram unless a link overrides it.  Lanes only
scale capacity and storage, there is no per-lane topology.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .config import DEFAULTS


class NetworkError(ValueError):
    """Raised when a network element violates a structural or physical rule."""


class NoPathError(LookupError):
    def __init__(self, origin: int, dest: int):
        super().__init__(f"no path from node {origin} to node {dest}")
        self.origin = origin
        self.dest = dest


@dataclass(frozen=True)
class NodeRecord:
    id: int
    lon: float
    lat: float
    signalized: bool = False
    name: str | None = None

    def __post_init__(self):
        if not -180.0 <= self.lon <= 180.0:
            raise NetworkError(f"node {self.id}: lon {self.lon} outside [-180, 180]")
        if not -90.0 <= self.lat <= 90.0:
            raise NetworkError(f"node {self.id}: lat {self.lat} outside [-90, 90]")


@dataclass(frozen=True)
class LinkRecord:
    """A homogeneous road segment.

    ``backward_wave_speed_mps`` may be passed explicitly; when left as None it
    is derived as ``q / (k_j - q / v_f)`` from the per-lane saturation flow
    ``q`` and jam density ``k_j``.
    """

    id: int
    from_node: int
    to_node: int
    length_m: float
    free_flow_speed_mps: float
    lanes: int = 1
    sat_flow_per_lane_vps: float = DEFAULTS.sat_flow_per_lane_vps
    jam_density_per_lane_vpm: float = DEFAULTS.jam_density_per_lane_vpm
    backward_wave_speed_mps: float | None = None
    road_class: str = "residential"
    wave_speed_overridden: bool = field(default=False, init=False, compare=False)

    def __post_init__(self):
        if self.from_node == self.to_node:
            raise NetworkError(f"link {self.id}: self-loop on node {self.from_node}")
        if not self.length_m >= 1.0:
            raise NetworkError(f"link {self.id}: length {self.length_m} m must be >= 1")
        if not self.free_flow_speed_mps > 0.0:
            raise NetworkError(f"link {self.id}: free-flow speed must be positive")
        if int(self.lanes) != self.lanes or self.lanes < 1:
            raise NetworkError(f"link {self.id}: lanes must be an integer >= 1")
        if not self.sat_flow_per_lane_vps > 0.0:
            raise NetworkError(f"link {self.id}: saturation flow must be positive")
        if not self.jam_density_per_lane_vpm > 0.0:
            raise NetworkError(f"link {self.id}: jam density must be positive")
        q = self.sat_flow_per_lane_vps
        kj = self.jam_density_per_lane_vpm
        if not q < self.free_flow_speed_mps * kj:
            raise NetworkError(
                f"link {self.id}: saturation flow {q} >= free-flow speed x jam density "
                f"{self.free_flow_speed_mps * kj} (fundamental diagram ill-formed)"
            )
        if self.backward_wave_speed_mps is None:
            object.__setattr__(self, "backward_wave_speed_mps", q / (kj - q / self.free_flow_speed_mps))
        else:
            if not self.backward_wave_speed_mps > 0.0:
                raise NetworkError(f"link {self.id}: backward wave speed must be positive")
            object.__setattr__(self, "wave_speed_overridden", True)


@dataclass(frozen=True)
class TurnMovement:
    id: int
    in_link: int
    out_link: int
    capacity_factor: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.capacity_factor <= 1.0:
            raise NetworkError(f"movement {self.id}: capacity factor must lie in (0, 1]")


def free_flow_time(link: LinkRecord) -> float:
    return link.length_m / link.free_flow_speed_mps


def storage_capacity(link: LinkRecord) -> float:
    """Vehicles the link holds at jam density (may be fractional)."""
    return link.length_m * link.lanes * link.jam_density_per_lane_vpm


def wave_time(link: LinkRecord) -> float:
    """Time for a vacancy to travel from the downstream to the upstream end."""
    return link.length_m / link.backward_wave_speed_mps


def link_capacity(link: LinkRecord) -> float:
    """Discharge capacity in vehicles per second across all lanes."""
    return link.lanes * link.sat_flow_per_lane_vps


class NetworkGraph:
    """Nodes, links and turn movements keyed by integer id.

    The add_* methods check local invariants and return the graph so calls
    can be chained; :func:`validate_network` checks global consistency.
    """

    def __init__(self):
        self.nodes: dict[int, NodeRecord] = {}
        self.links: dict[int, LinkRecord] = {}
        self.movements: dict[int, TurnMovement] = {}
        self._movement_by_pair: dict[tuple[int, int], TurnMovement] = {}

    def __repr__(self):
        return (f"NetworkGraph(nodes={len(self.nodes)}, links={len(self.links)}, "
                f"movements={len(self.movements)})")

    def add_node(self, node: NodeRecord) -> NetworkGraph:
        if node.id in self.nodes:
            raise NetworkError(f"duplicate node id {node.id}")
        self.nodes[node.id] = node
        return self

    def add_link(self, link: LinkRecord) -> NetworkGraph:
        if link.id in self.links:
            raise NetworkError(f"duplicate link id {link.id}")
        for end in (link.from_node, link.to_node):
            if end not in self.nodes:
                raise NetworkError(f"link {link.id}: endpoint node {end} does not exist")
        self.links[link.id] = link
        return self

    def add_movement(self, movement: TurnMovement) -> NetworkGraph:
        if movement.id in self.movements:
            raise NetworkError(f"duplicate movement id {movement.id}")
        for lid in (movement.in_link, movement.out_link):
            if lid not in self.links:
                raise NetworkError(f"movement {movement.id}: link {lid} does not exist")
        pair = (movement.in_link, movement.out_link)
        if pair in self._movement_by_pair:
            raise NetworkError(f"movement {movement.id}: duplicate movement for links {pair}")
        if self.links[movement.in_link].to_node != self.links[movement.out_link].from_node:
            raise NetworkError(f"movement {movement.id}: links {pair} do not meet at a junction")
        self.movements[movement.id] = movement
        self._movement_by_pair[pair] = movement
        return self

    def movement_between(self, in_link: int, out_link: int) -> TurnMovement | None:
        return self._movement_by_pair.get((in_link, out_link))

    def out_links(self, node_id: int) -> list[LinkRecord]:
        return sorted((l for l in self.links.values() if l.from_node == node_id), key=lambda l: l.id)

    def in_links(self, node_id: int) -> list[LinkRecord]:
        return sorted((l for l in self.links.values() if l.to_node == node_id), key=lambda l: l.id)

    def add_all_movements(self, allow_uturns: bool = False) -> NetworkGraph:
        """Create a movement for every feasible in/out pair not yet connected."""
        next_id = max(self.movements, default=0) + 1
        outgoing: dict[int, list[LinkRecord]] = {}
        for link in sorted(self.links.values(), key=lambda l: l.id):
            outgoing.setdefault(link.from_node, []).append(link)
        for lin in sorted(self.links.values(), key=lambda l: l.id):
            for lout in outgoing.get(lin.to_node, []):
                if not allow_uturns and lout.to_node == lin.from_node:
                    continue
                if (lin.id, lout.id) in self._movement_by_pair:
                    continue
                self.add_movement(TurnMovement(next_id, lin.id, lout.id))
                next_id += 1
        return self

    def copy(self) -> NetworkGraph:
        net = NetworkGraph()
        net.nodes = dict(self.nodes)
        net.links = dict(self.links)
        net.movements = dict(self.movements)
        net._movement_by_pair = dict(self._movement_by_pair)
        return net

    def __eq__(self, other):
        if not isinstance(other, NetworkGraph):
            return NotImplemented
        return (self.nodes == other.nodes and self.links == other.links
                and self.movements == other.movements)


def validate_network(net: NetworkGraph) -> list[str]:
    """Return a list of violations; an empty list means the net is simulatable."""
    report = []
    incident: set[int] = set()
    for lid in sorted(net.links):
        link = net.links[lid]
        for end in (link.from_node, link.to_node):
            if end not in net.nodes:
                report.append(f"link {lid}: references missing node {end}")
        incident.update((link.from_node, link.to_node))
        cap = storage_capacity(link)
        if cap < 1.0:
            report.append(f"link {lid}: storage < 1 ({cap:g} vehicles)")
    for mid in sorted(net.movements):
        mv = net.movements[mid]
        lin = net.links.get(mv.in_link)
        lout = net.links.get(mv.out_link)
        if lin is None or lout is None:
            missing = mv.in_link if lin is None else mv.out_link
            report.append(f"movement {mid}: references missing link {missing}")
        elif lin.to_node != lout.from_node:
            report.append(f"movement {mid}: links {mv.in_link} and {mv.out_link} do not share a junction")
    for nid in sorted(net.nodes):
        if nid not in incident:
            report.append(f"node {nid}: no incident links")
    return report


def path_cost(net: NetworkGraph, path: Iterable[int]) -> float:
    return sum(free_flow_time(net.links[lid]) for lid in path)


def shortest_path(net: NetworkGraph, origin: int, dest: int) -> list[int]:
    """Free-flow shortest link sequence from ``origin`` to ``dest``.

    Consecutive links must be joined by a turn movement.  Among equal-cost
    paths the lexicographically smallest link-id sequence wins.  Raises
    :class:`NoPathError` when the destination cannot be reached.
    """
    if origin == dest:
        raise NoPathError(origin, dest)
    succ: dict[int, list[int]] = {}
    for (lin, lout) in net._movement_by_pair:
        succ.setdefault(lin, []).append(lout)
    heap = [(free_flow_time(l), (l.id,)) for l in net.out_links(origin)]
    heapq.heapify(heap)
    settled: set[int] = set()
    while heap:
        cost, path = heapq.heappop(heap)
        last = path[-1]
        if last in settled:
            continue
        settled.add(last)
        if net.links[last].to_node == dest:
            return list(path)
        for nxt in succ.get(last, ()):
            if nxt not in settled:
                heapq.heappush(heap, (cost + free_flow_time(net.links[nxt]), path + (nxt,)))
    raise NoPathError(origin, dest)


# --- file format -----------------------------------------------------------

def network_from_dict(doc: dict) -> NetworkGraph:
    """Build a network from the JSON document layout (speeds in km/h)."""
    net = NetworkGraph()
    for n in doc.get("nodes", []):
        net.add_node(NodeRecord(int(n["id"]), float(n["lon"]), float(n["lat"]),
                                bool(n.get("signalized", False)), n.get("name")))
    for l in doc.get("links", []):
        net.add_link(LinkRecord(
            id=int(l["id"]),
            from_node=int(l["from_node"]),
            to_node=int(l["to_node"]),
            length_m=float(l["length_m"]),
            free_flow_speed_mps=float(l["speed_kmh"]) * 1000.0 / 3600.0,
            lanes=int(l.get("lanes", 1)),
            sat_flow_per_lane_vps=float(l.get("sat_flow_per_lane_vps", DEFAULTS.sat_flow_per_lane_vps)),
            jam_density_per_lane_vpm=float(l.get("jam_density_per_lane_vpm",
                                                  DEFAULTS.jam_density_per_lane_vpm)),
            backward_wave_speed_mps=(None if l.get("backward_wave_speed_mps") is None
                                     else float(l["backward_wave_speed_mps"])),
            road_class=str(l.get("road_class", "residential")),
        ))
    if "movements" in doc:
        for m in doc["movements"]:
            net.add_movement(TurnMovement(int(m["id"]), int(m["in_link"]), int(m["out_link"]),
                                          float(m.get("capacity_factor", 1.0))))
    else:
        net.add_all_movements()
    return net


def network_to_dict(net: NetworkGraph) -> dict:
    nodes = []
    for nid in sorted(net.nodes):
        n = net.nodes[nid]
        rec = {"id": n.id, "lon": n.lon, "lat": n.lat, "signalized": n.signalized}
        if n.name is not None:
            rec["name"] = n.name
        nodes.append(rec)
    links = []
    for lid in sorted(net.links):
        l = net.links[lid]
        rec = {
            "id": l.id, "from_node": l.from_node, "to_node": l.to_node,
            "length_m": l.length_m, "speed_kmh": l.free_flow_speed_mps * 3.6,
            "lanes": l.lanes, "sat_flow_per_lane_vps": l.sat_flow_per_lane_vps,
            "jam_density_per_lane_vpm": l.jam_density_per_lane_vpm,
            "road_class": l.road_class,
        }
        if l.wave_speed_overridden:
            rec["backward_wave_speed_mps"] = l.backward_wave_speed_mps
        links.append(rec)
    movements = [
        {"id": m.id, "in_link": m.in_link, "out_link": m.out_link, "capacity_factor": m.capacity_factor}
        for m in (net.movements[mid] for mid in sorted(net.movements))
    ]
    return {"nodes": nodes, "links": links, "movements": movements}


def load_network(path: str | Path) -> NetworkGraph:
    with open(path, "rb") as fh:
        return network_from_dict(json.load(fh))


def save_network(net: NetworkGraph, path: str | Path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=2, sort_keys=True) + "\n")
