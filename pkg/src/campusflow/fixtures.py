"""Small canonical networks with hand-checkable dynamics.

Each builder returns plain objects (network, trips, plans, ...) so tests and
examples can run them directly.  Coordinates are arbitrary points inside
the study area; only topology and link attributes matter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .demand import DemandProfile, ODPair, TripRequest, build_trips
from .netgraph import LinkRecord, NetworkGraph, NodeRecord, TurnMovement
from .signals import CrossingWindow, Phase, SignalPlan


@dataclass
class Fixture:
    name: str
    net: NetworkGraph
    trips: list[TripRequest]
    plans: list[SignalPlan] = field(default_factory=list)
    horizon_s: float = 3600.0
    crossings: list[CrossingWindow] = field(default_factory=list)
    capacity_overrides: list = field(default_factory=list)
    ods: list[ODPair] = field(default_factory=list)


def _node(i, signalized=False, name=None):
    return NodeRecord(i, 77.202 + 0.001 * i, 28.68 + 0.001 * i, signalized, name)


def _trip(vid, route, origin, dest, t):
    return TripRequest(vid, 0, origin, dest, float(t), tuple(route))


def single_link(n_vehicles=1, lanes=1, sat=0.5, jam=0.15) -> Fixture:
    """One 100 m link at 10 m/s; ``n_vehicles`` all depart at t=0."""
    net = NetworkGraph().add_node(_node(1)).add_node(_node(2))
    net.add_link(LinkRecord(1, 1, 2, 100.0, 10.0, lanes, sat, jam))
    trips = [_trip(v, [1], 1, 2, 0.0) for v in range(1, n_vehicles + 1)]
    return Fixture(f"single_link_{n_vehicles}", net, trips, horizon_s=600.0)


def red_light() -> Fixture:
    """A vehicle reaches a red stop line at t=10; its green starts at t=15."""
    net = NetworkGraph().add_node(_node(1)).add_node(_node(2, True)).add_node(_node(3))
    net.add_link(LinkRecord(1, 1, 2, 100.0, 10.0))
    net.add_link(LinkRecord(2, 2, 3, 100.0, 10.0))
    net.add_movement(TurnMovement(1, 1, 2))
    plan = SignalPlan(1, 2, 60.0, 15.0, (Phase(15.0, [1]),), lost_time_s=45.0)
    return Fixture("red_light", net, [_trip(1, [1, 2], 1, 3, 0.0)], [plan], horizon_s=600.0)


def spillback() -> Fixture:
    """Upstream link A feeds a short link B whose exit is red until t=100.

    B stores two vehicles (floor of 2.75) and its backward wave speed is
    overridden to 5 m/s, so a vacancy needs 10 s to cross it.  The exit
    link C only carries vehicles away.
    """
    net = NetworkGraph()
    for i in (1, 2, 3, 4):
        net.add_node(_node(i, signalized=(i == 3)))
    net.add_link(LinkRecord(1, 1, 2, 100.0, 10.0, 1, 0.5, 0.15))            # A
    net.add_link(LinkRecord(2, 2, 3, 50.0, 10.0, 1, 0.5, 0.055, 5.0))       # B
    net.add_link(LinkRecord(3, 3, 4, 1000.0, 10.0, 1, 0.5, 0.15))           # C
    net.add_movement(TurnMovement(1, 1, 2)).add_movement(TurnMovement(2, 2, 3))
    plan = SignalPlan(1, 3, 200.0, 100.0, (Phase(100.0, [2]),), lost_time_s=100.0)
    trips = [_trip(v, [1, 2, 3], 1, 4, 0.0) for v in range(1, 6)]
    return Fixture("spillback", net, trips, [plan], horizon_s=1000.0)


def cross(heavy_vph=360.0, light_vph=360.0, greens=(30.0, 30.0), duration_s=900.0,
          lanes=1, offset_s=0.0, horizon_s=3600.0) -> Fixture:
    """Two one-link approaches crossing at a two-phase signal (cycle 60 s).

    Approach 1 (node 1 -> 5) is served by phase 1, approach 2 (node 2 -> 5)
    by phase 2; each continues on an exit link.
    """
    net = NetworkGraph()
    net.add_node(_node(1)).add_node(_node(2)).add_node(_node(5, True, "junction"))
    net.add_node(_node(3)).add_node(_node(4))
    net.add_link(LinkRecord(1, 1, 5, 200.0, 10.0, lanes))
    net.add_link(LinkRecord(2, 2, 5, 200.0, 10.0, lanes))
    net.add_link(LinkRecord(3, 5, 3, 200.0, 10.0, 2))
    net.add_link(LinkRecord(4, 5, 4, 200.0, 10.0, 2))
    net.add_movement(TurnMovement(1, 1, 3)).add_movement(TurnMovement(2, 2, 4))
    plan = SignalPlan(1, 5, 60.0, offset_s, (Phase(greens[0], [1]), Phase(greens[1], [2])))
    ods = [
        ODPair(1, 3, DemandProfile([(0.0, duration_s, heavy_vph / 3600.0)])),
        ODPair(2, 4, DemandProfile([(0.0, duration_s, light_vph / 3600.0)])),
    ]
    return Fixture("cross", net, build_trips(net, ods), [plan], horizon_s=horizon_s, ods=ods)


def merge() -> Fixture:
    """Two feeders merge into a short bottleneck; entries compete for vacancies."""
    net = NetworkGraph()
    for i in range(1, 6):
        net.add_node(_node(i))
    net.add_link(LinkRecord(1, 1, 3, 100.0, 10.0, 1, 0.5))
    net.add_link(LinkRecord(2, 2, 3, 150.0, 10.0, 1, 0.5))
    net.add_link(LinkRecord(3, 3, 4, 40.0, 10.0, 1, 0.25, 0.1, 4.0))       # storage 4
    net.add_link(LinkRecord(4, 4, 5, 300.0, 15.0, 1, 0.5))
    for mid, (a, b) in enumerate([(1, 3), (2, 3), (3, 4)], start=1):
        net.add_movement(TurnMovement(mid, a, b))
    trips = []
    vid = 1
    for k in range(12):
        trips.append(_trip(vid, [1, 3, 4], 1, 5, 3.0 * k))
        vid += 1
        trips.append(_trip(vid, [2, 3, 4], 2, 5, 1.0 + 4.0 * k))
        vid += 1
    trips.sort(key=lambda tr: (tr.departure_s, tr.vehicle_id))
    return Fixture("merge", net, trips, horizon_s=2000.0)


def crossing_window() -> Fixture:
    """A movement whose capacity drops to zero for 10 s of every 40 s."""
    net = NetworkGraph().add_node(_node(1)).add_node(_node(2)).add_node(_node(3))
    net.add_link(LinkRecord(1, 1, 2, 100.0, 10.0, 1, 0.5))
    net.add_link(LinkRecord(2, 2, 3, 500.0, 10.0, 1, 0.5))
    net.add_movement(TurnMovement(1, 1, 2, 1.0))
    trips = [_trip(v, [1, 2], 1, 3, 2.0 * (v - 1)) for v in range(1, 21)]
    windows = [CrossingWindow(1, 40.0, 10.0, 0.0), CrossingWindow(1, 40.0, 30.0, 0.5, start_s=100.0)]
    return Fixture("crossing_window", net, trips, horizon_s=2000.0, crossings=windows)


def corridor_signals() -> Fixture:
    """Three-link corridor with two coordinated signals and a side street."""
    net = NetworkGraph()
    for i in range(1, 7):
        net.add_node(_node(i, signalized=i in (2, 3)))
    net.add_link(LinkRecord(1, 1, 2, 200.0, 10.0, 1))
    net.add_link(LinkRecord(2, 2, 3, 150.0, 10.0, 1, 0.5, 0.15))
    net.add_link(LinkRecord(3, 3, 4, 300.0, 10.0, 1))
    net.add_link(LinkRecord(4, 5, 2, 100.0, 10.0, 1))
    net.add_link(LinkRecord(5, 2, 6, 100.0, 10.0, 1))
    net.add_movement(TurnMovement(1, 1, 2)).add_movement(TurnMovement(2, 2, 3))
    net.add_movement(TurnMovement(3, 4, 5)).add_movement(TurnMovement(4, 4, 2, 0.5))
    plans = [
        SignalPlan(1, 2, 40.0, 0.0, (Phase(20.0, [1]), Phase(16.0, [3, 4])), lost_time_s=2.0),
        SignalPlan(2, 3, 40.0, 15.0, (Phase(25.0, [2]),), lost_time_s=15.0),
    ]
    trips = []
    vid = 1
    for k in range(30):
        trips.append(_trip(vid, [1, 2, 3], 1, 4, 2.0 * k))
        vid += 1
        if k % 3 == 0:
            trips.append(_trip(vid, [4, 2, 3] if k % 2 else [4, 5], 5, 4 if k % 2 else 6, 1.0 + 2.0 * k))
            vid += 1
    trips.sort(key=lambda tr: (tr.departure_s, tr.vehicle_id))
    return Fixture("corridor_signals", net, trips, plans, horizon_s=3000.0)


def unaligned_single() -> Fixture:
    """Single vehicle on a link whose free-flow time is off any time grid."""
    net = NetworkGraph().add_node(_node(1)).add_node(_node(2))
    net.add_link(LinkRecord(1, 1, 2, 97.3, 11.1))
    return Fixture("unaligned_single", net, [_trip(1, [1], 1, 2, 0.0)], horizon_s=100.0)


def bundled() -> list[Fixture]:
    """All kernel fixtures checked against the fixed-step oracle."""
    return [
        single_link(1),
        single_link(5),
        red_light(),
        spillback(),
        cross(duration_s=120.0),
        cross(heavy_vph=1440.0, light_vph=360.0, duration_s=150.0, lanes=2),
        merge(),
        crossing_window(),
        corridor_signals(),
        unaligned_single(),
    ]


def two_surge():
    """A signalized approach and two back-to-back surge scenarios.

    Each surge alone overloads the approach for ten minutes and then
    drains.  Run one after the other, the second arrives on top of the
    first one's residual queue.  Returns (net, plans, S, S2, horizon_s).
    """
    from .scenarios import ScenarioSpec

    net = NetworkGraph()
    for i in (1, 2, 3):
        net.add_node(_node(i, signalized=(i == 2)))
    net.add_link(LinkRecord(1, 1, 2, 300.0, 10.0, 1, 0.5, 0.15))
    net.add_link(LinkRecord(2, 2, 3, 300.0, 10.0, 2, 0.5, 0.15))
    net.add_movement(TurnMovement(1, 1, 2))
    plan = SignalPlan(1, 2, 60.0, 0.0, (Phase(27.0, [1]),), lost_time_s=33.0)
    # green share 27/60 of 0.5 veh/s gives 810 veh/h; each surge brings 1080 veh/h
    surge = ODPair(1, 3, DemandProfile([(0.0, 600.0, 0.3)]))
    s1 = ScenarioSpec("surge_a", (0.0, 600.0), [surge])
    s2 = ScenarioSpec("surge_b", (0.0, 600.0), [surge])
    return net, [plan], s1, s2, 3600.0
