"""Fixed-step reference for the event-driven kernel.

Time advances on a uniform grid t_k = k * dt.  At each grid instant every
waiting vehicle is polled against the same physical rules the kernel uses
(free flow, discharge headway, green, backward-wave entry permission) and
moves as soon as all hold.  No event queue and no closed-form exit times are
involved, so agreement with the kernel checks its event logic.
"""

from __future__ import annotations

import math
from collections import deque

from campusflow.netgraph import free_flow_time, link_capacity, storage_capacity, wave_time
from campusflow.signals import CapacityProfile
from campusflow.simcore import build_schedules

TOL = 1e-9


def run_oracle(fx, dt: float):
    """Return {vehicle_id: (entries, exits)} from a fixed-step run of fixture ``fx``."""
    net = fx.net
    schedules = build_schedules(fx.plans)
    by_node = {s.node: s for s in schedules.values()}
    capacity = CapacityProfile({m: mv.capacity_factor for m, mv in net.movements.items()},
                               fx.capacity_overrides, fx.crossings)
    store = {lid: math.floor(storage_capacity(l)) for lid, l in net.links.items()}

    entrants = {lid: [] for lid in net.links}
    exit_times = {lid: [] for lid in net.links}
    veh = {tr.vehicle_id: {"trip": tr, "idx": -1, "entries": [], "exits": [], "done": False}
           for tr in fx.trips}
    pending = sorted(fx.trips, key=lambda tr: (tr.departure_s, tr.vehicle_id))
    buffers: dict[int, deque] = {}
    p = 0

    def permitted(lid, t):
        m = len(entrants[lid]) + 1
        if m <= store[lid]:
            return True
        blocker = m - store[lid]
        if blocker > len(exit_times[lid]):
            return False
        return t >= exit_times[lid][blocker - 1] + wave_time(net.links[lid]) - TOL

    def can_exit(v, t):
        tr = v["trip"]
        lid = tr.route[v["idx"]]
        link = net.links[lid]
        if t < v["entries"][-1] + free_flow_time(link) - TOL:
            return False
        nxt = tr.route[v["idx"] + 1] if v["idx"] + 1 < len(tr.route) else None
        mid = net.movement_between(lid, nxt).id if nxt is not None else None
        f = capacity.factor(mid, t)
        if f <= 0:
            return False
        if exit_times[lid] and t < exit_times[lid][-1] + 1.0 / (link_capacity(link) * f) - TOL:
            return False
        if mid is not None:
            sched = by_node.get(link.to_node)
            if sched is not None and not sched.is_green(mid, t):
                return False
        return nxt is None or permitted(nxt, t)

    n_steps = int(round(fx.horizon_s / dt))
    k = 0
    while k <= n_steps:
        t = k * dt
        idle = p == len(pending) or pending[p].departure_s > t + TOL
        if idle and not any(buffers.values()) and all(
                len(exit_times[l]) == len(entrants[l]) for l in net.links):
            if p == len(pending):
                break
            # nothing in the system: skip to the grid step of the next departure
            k = max(k + 1, math.ceil((pending[p].departure_s - TOL) / dt))
            continue
        while p < len(pending) and pending[p].departure_s <= t + TOL:
            tr = pending[p]
            buffers.setdefault(tr.origin, deque()).append(tr.vehicle_id)
            p += 1
        moved = True
        while moved:
            moved = False
            heads = sorted(buf[0] for buf in buffers.values() if buf)
            for vid in heads:
                v = veh[vid]
                first = v["trip"].route[0]
                if permitted(first, t):
                    buffers[v["trip"].origin].popleft()
                    v["idx"] = 0
                    v["entries"].append(t)
                    entrants[first].append(vid)
                    moved = True
                    break
            if moved:
                continue
            link_heads = []
            for lid in net.links:
                n = len(exit_times[lid])
                if n < len(entrants[lid]):
                    link_heads.append(entrants[lid][n])
            for vid in sorted(link_heads):
                v = veh[vid]
                if can_exit(v, t):
                    lid = v["trip"].route[v["idx"]]
                    exit_times[lid].append(t)
                    v["exits"].append(t)
                    if v["idx"] + 1 < len(v["trip"].route):
                        v["idx"] += 1
                        nxt = v["trip"].route[v["idx"]]
                        v["entries"].append(t)
                        entrants[nxt].append(vid)
                    else:
                        v["done"] = True
                    moved = True
                    break
        k += 1
    return {vid: (v["entries"], v["exits"]) for vid, v in veh.items()}


def max_discrepancy(result, oracle) -> float:
    """Largest |kernel - oracle| over all per-link entry and exit times.

    A time present on one side only counts as infinite discrepancy.
    """
    worst = 0.0
    for tr in result.trips:
        o_entries, o_exits = oracle[tr.vehicle_id]
        if len(o_entries) != len(tr.link_entries) or len(o_exits) != len(tr.link_exits):
            return math.inf
        for a, b in zip(tr.link_entries + tr.link_exits, tuple(o_entries) + tuple(o_exits)):
            worst = max(worst, abs(a - b))
    return worst
