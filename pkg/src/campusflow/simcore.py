"""Event-driven mesoscopic kernel built on Newell's kinematic-wave link model.

Each link is a spatial queue.  A vehicle leaves link ``l`` at the earliest
instant satisfying all of

* free flow: entry time + length / free-flow speed,
* discharge headway: previous exit from ``l`` + 1 / (lanes x sat flow x
  capacity factor of its turn movement),
* signal gating: the movement is green (half-open windows),
* entry permission on the next link: if it would be the m-th entrant and
  the link stores S = floor(storage) vehicles, entrant m - S must have left
  at least length / backward wave speed earlier.

Vehicles blocked by a red light or a missing vacancy are parked and woken
only by the event that can release them (PhaseChange, HoleArrival); vehicles
that just need time to pass get an ExitCandidate timer.  Events are ordered
by (time, kind priority, subject id, insertion sequence).
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Callable, Iterable

from .netgraph import (NetworkGraph, free_flow_time, link_capacity, storage_capacity,
                       validate_network, wave_time)
from .signals import CapacityProfile, CrossingWindow, SignalPlan, SignalSchedule, validate_plan

NEG_INF = -math.inf
WAKE_TOL = 1e-7


class KernelFault(RuntimeError):
    """Internal inconsistency; indicates a kernel bug rather than bad input."""


class SimulationInputError(ValueError):
    pass


class EventKind(IntEnum):
    # value doubles as priority at equal timestamps
    PhaseChange = 0
    HoleArrival = 1
    Departure = 2
    ExitCandidate = 3
    HorizonEnd = 4


class VehState(IntEnum):
    Pending = 0
    WaitingAtOrigin = 1
    OnLink = 2
    Arrived = 3


@dataclass
class VehicleState:
    vehicle_id: int
    origin: int
    destination: int
    route: tuple[int, ...]
    depart_s: float
    route_index: int = 0
    state: VehState = VehState.Pending
    link_entry_s: float = NEG_INF
    earliest_exit_s: float = NEG_INF
    first_entry_s: float | None = None
    arrive_s: float | None = None
    entries: list[float] = field(default_factory=list)
    exits: list[float] = field(default_factory=list)

    @property
    def link(self) -> int:
        return self.route[self.route_index]


@dataclass
class LinkState:
    """Entry/exit bookkeeping for one link; exits occur in entry order."""

    entrants: list[int] = field(default_factory=list)
    entry_times: list[float] = field(default_factory=list)
    exit_times: list[float] = field(default_factory=list)
    last_exit_s: float = NEG_INF

    @property
    def on_link_count(self) -> int:
        return len(self.entrants) - len(self.exit_times)

    @property
    def head(self) -> int | None:
        n = len(self.exit_times)
        return self.entrants[n] if n < len(self.entrants) else None


@dataclass
class TripRecord:
    vehicle_id: int
    origin: int
    destination: int
    route: tuple[int, ...]
    depart_s: float
    arrive_s: float | None
    origin_wait_s: float
    free_flow_s: float
    link_entries: tuple[float, ...]
    link_exits: tuple[float, ...]

    @property
    def completed(self) -> bool:
        return self.arrive_s is not None

    @property
    def delay_s(self) -> float | None:
        if self.arrive_s is None:
            return None
        return (self.arrive_s - self.depart_s) - self.free_flow_s


@dataclass
class LinkLog:
    link_id: int
    entries: list[tuple[int, float]]
    exits: list[tuple[int, float]]


@dataclass
class SimResult:
    trips: list[TripRecord]
    links: dict[int, LinkLog]
    event_count: int
    clock_end_s: float
    horizon_s: float
    link_free_flow_s: dict[int, float] = field(default_factory=dict)
    events: list[tuple[float, str, int, str]] | None = None

    def event_log_lines(self) -> list[str]:
        if self.events is None:
            return []
        return [f"{t!r}\t{k}\t{s}\t{d}" for t, k, s, d in self.events]


@dataclass(frozen=True)
class Census:
    """Vehicle accounting snapshot passed to observers after each event."""

    time_s: float
    generated: int
    waiting_at_origin: int
    on_network: int
    arrived: int
    incomplete: int


def entry_permission_time(m: int, link, link_state: LinkState) -> float | None:
    """Backward-wave constraint for the m-th entrant (1-based) of ``link``.

    Returns -inf when unconstrained, the permission time when the blocking
    exit already happened, or None while it has not.
    """
    store = math.floor(storage_capacity(link))
    if m <= store:
        return NEG_INF
    blocker = m - store
    if blocker > len(link_state.exit_times):
        return None
    return link_state.exit_times[blocker - 1] + wave_time(link)


def earliest_exit_time(entry_s: float, link, last_exit_s: float, movement: int | None = None,
                       lower_s: float = NEG_INF, capacity: CapacityProfile | None = None,
                       schedule: SignalSchedule | None = None) -> tuple[float, str]:
    """Earliest exit honouring free flow, headway and green gating.

    Returns (time, reason) where reason names the constraint that fixed the
    time: "timer" (free flow, headway or lower bound), "green", or "red"
    when the movement never turns green (time is inf).
    """
    t = max(lower_s, entry_s + free_flow_time(link))
    base_headway = 1.0 / link_capacity(link)
    reason = "timer"
    for _ in range(100_000):
        if schedule is not None and movement is not None:
            g = schedule.next_green_start(movement, t)
            if g == math.inf:
                return math.inf, "red"
            if g > t:
                t = g
                reason = "green"
        f = 1.0 if capacity is None else capacity.factor(movement, t)
        if f <= 0.0:
            t = capacity.next_change(movement, t)
            reason = "timer"
            if t == math.inf:
                return math.inf, "red"
            continue
        need = last_exit_s + base_headway / f
        if need > t:
            t = need
            reason = "timer"
            continue
        return t, reason
    raise KernelFault("exit-time fixpoint did not converge")


class Kernel:
    """Mutable state of one simulation run.  Not thread-safe; one per run."""

    def __init__(self, net: NetworkGraph, trips, schedules: dict[int, SignalSchedule],
                 capacity: CapacityProfile, horizon_s: float, record_events: bool = False,
                 observer: Callable[[Census], None] | None = None):
        self.net = net
        self.horizon_s = horizon_s
        self.capacity = capacity
        self.schedules = schedules
        self.observer = observer
        self.events: list | None = [] if record_events else None
        self._details: list[str] = []
        self._heap: list = []
        self._seq = 0
        self.now = NEG_INF
        self.event_count = 0

        # movement id -> schedule of the signal at its junction
        self.movement_signal: dict[int, SignalSchedule] = {}
        by_node = {s.node: s for s in schedules.values()}
        for mid, mv in net.movements.items():
            node = net.links[mv.in_link].to_node
            if node in by_node:
                self.movement_signal[mid] = by_node[node]

        self.links = {lid: LinkState() for lid in net.links}
        self.store = {lid: math.floor(storage_capacity(l)) for lid, l in net.links.items()}
        self.vehicles: dict[int, VehicleState] = {}
        for tr in trips:
            if tr.vehicle_id in self.vehicles or tr.vehicle_id < 1:
                raise SimulationInputError(f"vehicle id {tr.vehicle_id} is duplicated or not positive")
            self._check_route(tr)
            self.vehicles[tr.vehicle_id] = VehicleState(
                tr.vehicle_id, tr.origin, tr.destination, tuple(tr.route), float(tr.departure_s))
        self.origin_buffers: dict[int, deque[int]] = {}
        self.parked_link: dict[int, set[int]] = {}
        self.parked_signal: dict[int, dict[int, float]] = {}
        self.stuck: set[int] = set()
        self.hole_pending: set[tuple[int, float]] = set()
        self.generated = 0
        self.waiting = 0
        self.on_network = 0
        self.arrived = 0
        self.finished = False

    def _check_route(self, tr):
        route = list(tr.route)
        if not route:
            raise SimulationInputError(f"vehicle {tr.vehicle_id}: empty route")
        for lid in route:
            if lid not in self.net.links:
                raise SimulationInputError(f"vehicle {tr.vehicle_id}: unknown link {lid}")
        if self.net.links[route[0]].from_node != tr.origin or self.net.links[route[-1]].to_node != tr.destination:
            raise SimulationInputError(f"vehicle {tr.vehicle_id}: route does not join its OD pair")
        for a, b in zip(route, route[1:]):
            if self.net.movement_between(a, b) is None:
                raise SimulationInputError(f"vehicle {tr.vehicle_id}: no movement from link {a} to {b}")

    # -- event queue ---------------------------------------------------------

    def schedule(self, time_s: float, kind: EventKind, subject: int):
        if time_s < self.now:
            raise KernelFault(f"event {kind.name} at {time_s} scheduled in the past ({self.now})")
        self._seq += 1
        heapq.heappush(self._heap, (time_s, int(kind), subject, self._seq))

    def _log(self, kind: EventKind, subject: int, detail: str):
        # details accumulate into the record of the event being processed
        if self.events is not None:
            self._details.append(detail)

    # -- constraint evaluation -----------------------------------------------

    def _movement(self, v: VehicleState) -> int | None:
        if v.route_index + 1 >= len(v.route):
            return None
        return self.net.movement_between(v.link, v.route[v.route_index + 1]).id

    def _permission(self, lid: int) -> float | None:
        ls = self.links[lid]
        return entry_permission_time(len(ls.entrants) + 1, self.net.links[lid], ls)

    def _park_on_link(self, vid: int, lid: int, hole_time: float | None):
        self.parked_link.setdefault(lid, set()).add(vid)
        if hole_time is not None:
            self._schedule_hole(lid, hole_time)

    def _schedule_hole(self, lid: int, t: float):
        if (lid, t) not in self.hole_pending:
            self.hole_pending.add((lid, t))
            self.schedule(t, EventKind.HoleArrival, lid)

    def _evaluate_exit(self, v: VehicleState) -> tuple[str, float]:
        """Decide what the head vehicle ``v`` does next from time ``now``.

        Returns ("go", now), ("timer", T), ("green", T), ("hole", T),
        ("blocked", nan) or ("red", inf).
        """
        link = self.net.links[v.link]
        nxt = v.route[v.route_index + 1] if v.route_index + 1 < len(v.route) else None
        hole = NEG_INF
        if nxt is not None:
            p = self._permission(nxt)
            if p is None:
                return "blocked", math.nan
            hole = p
        mid = self._movement(v)
        sched = self.movement_signal.get(mid) if mid is not None else None
        lower = max(self.now, hole)
        t, reason = earliest_exit_time(v.link_entry_s, link, self.links[v.link].last_exit_s,
                                       mid, lower, self.capacity, sched)
        v.earliest_exit_s = t
        if reason == "red":
            return "red", t
        if t <= self.now:
            return "go", t
        if reason == "timer" and t == hole and hole > self.now:
            return "hole", t
        return reason, t

    def _dispatch_head(self, v: VehicleState):
        """Schedule or park the head vehicle of its current link."""
        action, t = self._evaluate_exit(v)
        if action in ("go", "timer"):
            self.schedule(t, EventKind.ExitCandidate, v.vehicle_id)
        else:
            self._park(v, action, t)

    def _park(self, v: VehicleState, action: str, t: float):
        vid = v.vehicle_id
        if action == "blocked":
            self._park_on_link(vid, v.route[v.route_index + 1], None)
        elif action == "hole":
            self._park_on_link(vid, v.route[v.route_index + 1], t)
        elif action == "green":
            sched = self.movement_signal[self._movement(v)]
            self.parked_signal.setdefault(sched.signal_id, {})[vid] = t
        elif action == "red":
            self.stuck.add(vid)
        else:
            raise KernelFault(f"unknown park action {action}")
        self._log(EventKind.ExitCandidate, vid, f"park {action} {t!r}")

    # -- state transitions ---------------------------------------------------

    def _enter(self, v: VehicleState, lid: int):
        ls = self.links[lid]
        if not ls.on_link_count < storage_capacity(self.net.links[lid]):
            raise KernelFault(f"storage exceeded on link {lid} at {self.now}")
        ls.entrants.append(v.vehicle_id)
        ls.entry_times.append(self.now)
        v.link_entry_s = self.now
        v.entries.append(self.now)
        if ls.head == v.vehicle_id:
            self._dispatch_head(v)

    def _exit(self, v: VehicleState):
        lid = v.link
        ls = self.links[lid]
        if ls.head != v.vehicle_id:
            raise KernelFault(f"vehicle {v.vehicle_id} exits link {lid} out of FIFO order")
        ls.exit_times.append(self.now)
        ls.last_exit_s = self.now
        v.exits.append(self.now)
        j = len(ls.exit_times)
        if v.route_index + 1 < len(v.route):
            v.route_index += 1
            self._log(EventKind.ExitCandidate, v.vehicle_id, f"transfer {lid}->{v.link}")
            self._enter(v, v.link)
        else:
            v.state = VehState.Arrived
            v.arrive_s = self.now
            self.on_network -= 1
            self.arrived += 1
            self._log(EventKind.ExitCandidate, v.vehicle_id, f"arrive {lid}")
        head = ls.head
        if head is not None:
            self._dispatch_head(self.vehicles[head])
        if self.parked_link.get(lid) and j == len(ls.entrants) + 1 - self.store[lid]:
            self._schedule_hole(lid, self.now + wave_time(self.net.links[lid]))

    def _try_origin_entry(self, v: VehicleState):
        lid = v.route[0]
        p = self._permission(lid)
        if p is None:
            self._park_on_link(v.vehicle_id, lid, None)
            self._log(EventKind.Departure, v.vehicle_id, f"wait blocked {lid}")
            return
        if p > self.now:
            self._park_on_link(v.vehicle_id, lid, p)
            self._log(EventKind.Departure, v.vehicle_id, f"wait hole {lid} {p!r}")
            return
        buf = self.origin_buffers[v.origin]
        if buf[0] != v.vehicle_id:
            raise KernelFault(f"vehicle {v.vehicle_id} is not at the head of origin {v.origin}")
        buf.popleft()
        self.waiting -= 1
        self.on_network += 1
        v.state = VehState.OnLink
        v.first_entry_s = self.now
        self._log(EventKind.Departure, v.vehicle_id, f"enter {lid}")
        self._enter(v, lid)
        if buf:
            self.schedule(self.now, EventKind.Departure, buf[0])

    # -- handlers --------------------------------------------------------------

    def _on_departure(self, vid: int):
        v = self.vehicles[vid]
        if v.state == VehState.Pending:
            self.generated += 1
            self.waiting += 1
            v.state = VehState.WaitingAtOrigin
            buf = self.origin_buffers.setdefault(v.origin, deque())
            buf.append(vid)
            if buf[0] != vid:
                self._log(EventKind.Departure, vid, "queue origin")
                return
        elif v.state != VehState.WaitingAtOrigin:
            raise KernelFault(f"departure event for vehicle {vid} in state {v.state.name}")
        self._try_origin_entry(v)

    def _on_exit_candidate(self, vid: int):
        v = self.vehicles[vid]
        if v.state != VehState.OnLink or self.links[v.link].head != vid:
            raise KernelFault(f"exit candidate for vehicle {vid} which is not a link head")
        action, t = self._evaluate_exit(v)
        if action == "go":
            self._exit(v)
        elif action == "timer":
            self._log(EventKind.ExitCandidate, vid, f"retry {t!r}")
            self.schedule(t, EventKind.ExitCandidate, vid)
        else:
            self._park(v, action, t)

    def _on_hole(self, lid: int):
        self.hole_pending.discard((lid, self.now))
        woken = sorted(self.parked_link.pop(lid, ()))
        self._log(EventKind.HoleArrival, lid, f"wake {len(woken)}")
        for vid in woken:
            v = self.vehicles[vid]
            kind = EventKind.Departure if v.state == VehState.WaitingAtOrigin else EventKind.ExitCandidate
            self.schedule(self.now, kind, vid)

    def _on_phase_change(self, sid: int):
        parked = self.parked_signal.get(sid, {})
        woken = sorted(vid for vid, g in parked.items() if g <= self.now + WAKE_TOL)
        for vid in woken:
            del parked[vid]
            self.schedule(self.now, EventKind.ExitCandidate, vid)
        self._log(EventKind.PhaseChange, sid, f"wake {len(woken)}")
        if self.arrived < len(self.vehicles):
            self._schedule_phase(self.schedules[sid], self.now)

    def _schedule_phase(self, sched: SignalSchedule, t: float):
        nb = sched.next_boundary(t)
        if nb <= t:
            nb = sched.next_boundary(t + 1e-6)
        if nb != math.inf and nb <= self.horizon_s:
            self.schedule(nb, EventKind.PhaseChange, sched.signal_id)

    def _flush(self, kind: EventKind, subject: int):
        if self.events is not None:
            self.events.append((self.now, kind.name, subject, "; ".join(self._details) or "-"))

    def census(self) -> Census:
        inc = 0
        if self.finished:
            inc = self.generated - self.arrived
        return Census(self.now, self.generated, self.waiting if not self.finished else 0,
                      self.on_network if not self.finished else 0, self.arrived, inc)

    # -- main loop -------------------------------------------------------------

    def run(self) -> SimResult:
        for vid in sorted(self.vehicles, key=lambda i: (self.vehicles[i].depart_s, i)):
            if self.vehicles[vid].depart_s <= self.horizon_s:
                self.schedule(self.vehicles[vid].depart_s, EventKind.Departure, vid)
        for sid in sorted(self.schedules):
            self._schedule_phase(self.schedules[sid], min(0.0, self.horizon_s))
        self.schedule(self.horizon_s, EventKind.HorizonEnd, 0)
        handlers = {
            EventKind.Departure: self._on_departure,
            EventKind.ExitCandidate: self._on_exit_candidate,
            EventKind.HoleArrival: self._on_hole,
            EventKind.PhaseChange: self._on_phase_change,
        }
        while self._heap:
            time_s, kind, subject, _ = heapq.heappop(self._heap)
            kind = EventKind(kind)
            self.now = time_s
            self.event_count += 1
            self._details = []
            if kind == EventKind.HorizonEnd:
                self.finished = True
                self._log(kind, subject, f"incomplete {len(self.vehicles) - self.arrived}")
                self._flush(kind, subject)
                if self.observer:
                    self.observer(self.census())
                break
            handlers[kind](subject)
            self._flush(kind, subject)
            if self.observer:
                self.observer(self.census())
            if self.arrived == len(self.vehicles):
                break
        return self._result()

    def _result(self) -> SimResult:
        trips = []
        end = self.now
        for vid in sorted(self.vehicles):
            v = self.vehicles[vid]
            if v.first_entry_s is not None:
                wait = v.first_entry_s - v.depart_s
            elif v.state == VehState.WaitingAtOrigin:
                wait = end - v.depart_s
            else:
                wait = 0.0
            ff = sum(free_flow_time(self.net.links[l]) for l in v.route)
            trips.append(TripRecord(vid, v.origin, v.destination, v.route, v.depart_s, v.arrive_s,
                                    wait, ff, tuple(v.entries), tuple(v.exits)))
        links = {}
        for lid in sorted(self.links):
            ls = self.links[lid]
            links[lid] = LinkLog(lid, list(zip(ls.entrants, ls.entry_times)),
                                 list(zip(ls.entrants, ls.exit_times)))
        ff = {lid: free_flow_time(l) for lid, l in sorted(self.net.links.items())}
        return SimResult(trips, links, self.event_count, end, self.horizon_s, ff, self.events)


def build_schedules(plans: Iterable[SignalPlan], plan_overrides=()) -> dict[int, SignalSchedule]:
    """Group base plans and (start, end, plan) overrides by signal id."""
    base = {}
    for p in plans:
        if p.signal_id in base:
            raise SimulationInputError(f"duplicate signal id {p.signal_id}")
        base[p.signal_id] = p
    extra: dict[int, list] = {}
    for a, b, p in plan_overrides:
        if p.signal_id not in base:
            raise SimulationInputError(f"override for unknown signal {p.signal_id}")
        extra.setdefault(p.signal_id, []).append((a, b, p))
    return {sid: SignalSchedule(base[sid], extra.get(sid, ())) for sid in sorted(base)}


def run_simulation(net: NetworkGraph, trips, plans: Iterable[SignalPlan] = (), horizon_s: float = 3600.0,
                   *, crossings: Iterable[CrossingWindow] = (), capacity_overrides=(),
                   plan_overrides=(), record_events: bool = False,
                   observer: Callable[[Census], None] | None = None) -> SimResult:
    """Simulate ``trips`` on ``net`` until every vehicle arrives or the horizon.

    ``capacity_overrides`` holds (movement, start, end, factor) tuples and
    ``plan_overrides`` holds (start, end, plan) tuples replacing the plan of
    the same signal id inside the window.
    """
    if not horizon_s > 0:
        raise SimulationInputError("horizon must be positive")
    problems = validate_network(net)
    if problems:
        raise SimulationInputError("invalid network: " + "; ".join(problems))
    plans = list(plans)
    seen_nodes = set()
    for p in plans + [o[2] for o in plan_overrides]:
        problems = validate_plan(p, net)
        if problems:
            raise SimulationInputError("invalid signal plan: " + "; ".join(problems))
    for p in plans:
        if p.node in seen_nodes:
            raise SimulationInputError(f"node {p.node} has more than one signal plan")
        seen_nodes.add(p.node)
    schedules = build_schedules(plans, plan_overrides)
    base_factors = {mid: mv.capacity_factor for mid, mv in net.movements.items()}
    for m, *_ in capacity_overrides:
        if m not in net.movements:
            raise SimulationInputError(f"capacity override for unknown movement {m}")
    crossings = list(crossings)
    for w in crossings:
        if w.movement not in net.movements:
            raise SimulationInputError(f"crossing window on unknown movement {w.movement}")
    capacity = CapacityProfile(base_factors, capacity_overrides, crossings)
    kernel = Kernel(net, trips, schedules, capacity, float(horizon_s), record_events, observer)
    return kernel.run()
