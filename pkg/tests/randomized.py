"""Random small instances and the invariant checks run over them."""

from __future__ import annotations

import math
import random

from campusflow.demand import DemandProfile, ODPair, build_trips
from campusflow.netgraph import (LinkRecord, NetworkGraph, NodeRecord, NoPathError, link_capacity,
                                 shortest_path, storage_capacity, wave_time)
from campusflow.signals import CrossingWindow, Phase, SignalPlan
from campusflow.simcore import build_schedules, run_simulation

TOL = 1e-9


def random_network(rng: random.Random, max_nodes: int = 8) -> NetworkGraph:
    n = rng.randint(2, max_nodes)
    net = NetworkGraph()
    for i in range(1, n + 1):
        net.add_node(NodeRecord(i, 77.205 + 0.001 * i, 28.68 + 0.0005 * (i % 3)))
    pairs = [(a, b) for a in range(1, n + 1) for b in range(1, n + 1) if a != b]
    # a ring guarantees every node has an incident link and the graph is connected
    chosen = {(i, i % n + 1) for i in range(1, n + 1)}
    chosen |= set(rng.sample(pairs, rng.randint(0, min(len(pairs), 2 * n))))
    for lid, (a, b) in enumerate(sorted(chosen), start=1):
        lanes = rng.choice((1, 1, 2))
        jam = rng.uniform(0.08, 0.2)
        length = rng.uniform(max(10.0, 1.2 / (lanes * jam)), 300.0)
        wave = rng.choice((None, None, rng.uniform(3.0, 8.0)))
        speed = rng.uniform(5.0, 20.0)
        # saturation flow must stay below speed x jam density
        sat = rng.uniform(0.3, min(0.6, 0.9 * speed * jam))
        net.add_link(LinkRecord(lid, a, b, length, speed, lanes, sat, jam, wave))
    net.add_all_movements()
    for mv in list(net.movements.values()):
        if rng.random() < 0.2:
            net.movements[mv.id] = type(mv)(mv.id, mv.in_link, mv.out_link, rng.uniform(0.3, 1.0))
    return net


def random_plans(rng: random.Random, net: NetworkGraph, share: float = 0.5) -> list[SignalPlan]:
    plans = []
    for node in sorted(net.nodes):
        moves = sorted(m for m, mv in net.movements.items() if net.links[mv.in_link].to_node == node)
        if not moves or rng.random() >= share:
            continue
        n_ph = rng.randint(1, min(3, len(moves)))
        groups = [[] for _ in range(n_ph)]
        for k, m in enumerate(moves):
            groups[k % n_ph if k < n_ph else rng.randrange(n_ph)].append(m)
        lost = rng.choice((0.0, 2.0, 3.5))
        greens = [rng.choice((5.0, 7.5, 10.0, 15.0, 21.3)) for _ in range(n_ph)]
        cycle = sum(greens) + n_ph * lost
        offset = rng.choice((0.0, rng.uniform(0.0, cycle)))
        plans.append(SignalPlan(len(plans) + 1, node, cycle, offset,
                                tuple(Phase(g, tuple(grp)) for g, grp in zip(greens, groups)),
                                lost_time_s=lost))
    return plans


def random_demand(rng: random.Random, net: NetworkGraph, max_vehicles: int = 30) -> list[ODPair]:
    nodes = sorted(net.nodes)
    ods = []
    budget = max_vehicles
    for _ in range(rng.randint(1, 4)):
        o, d = rng.sample(nodes, 2)
        try:
            shortest_path(net, o, d)
        except NoPathError:
            continue
        segs, t = [], rng.choice((0.0, rng.uniform(0.0, 60.0)))
        for _ in range(rng.randint(1, 3)):
            dur = rng.uniform(10.0, 120.0)
            rate = rng.choice((0.0, rng.uniform(0.02, 0.6)))
            if rate * dur > budget:
                rate = budget / dur
            budget -= math.floor(rate * dur)
            segs.append((t, t + dur, rate))
            t += dur + rng.choice((0.0, rng.uniform(0.0, 30.0)))
        ods.append(ODPair(o, d, DemandProfile(segs)))
    return ods


def random_instance(seed: int, signals: bool = True):
    """(net, trips, plans, crossings, horizon) drawn from ``seed``."""
    rng = random.Random(seed)
    net = random_network(rng)
    plans = random_plans(rng, net) if signals else []
    ods = random_demand(rng, net)
    mode = rng.choice(("deterministic", "poisson"))
    trips = build_trips(net, ods, mode, seed)
    crossings = []
    if net.movements and rng.random() < 0.2:
        m = rng.choice(sorted(net.movements))
        crossings.append(CrossingWindow(m, rng.uniform(20.0, 60.0), rng.uniform(2.0, 15.0),
                                        rng.choice((0.0, 0.5))))
    horizon = rng.choice((300.0, 900.0, 3000.0))
    return net, trips, plans, crossings, horizon


class Violations(list):
    def add(self, msg: str):
        self.append(msg)


def check_conservation(total: int):
    """Observer that records accounting violations after every event."""
    bad = Violations()
    last = {"t": -math.inf, "gen": 0, "arr": 0}

    def observe(c):
        if c.time_s < last["t"] - TOL:
            bad.add(f"clock went back at {c.time_s}")
        if c.generated < last["gen"] or c.arrived < last["arr"]:
            bad.add(f"counter decreased at {c.time_s}")
        if c.generated > total:
            bad.add(f"generated {c.generated} of {total}")
        if c.generated != c.waiting_at_origin + c.on_network + c.arrived + c.incomplete:
            bad.add(f"census imbalance at {c.time_s}: {c}")
        if min(c.waiting_at_origin, c.on_network, c.arrived, c.incomplete) < 0:
            bad.add(f"negative count at {c.time_s}")
        last.update(t=c.time_s, gen=c.generated, arr=c.arrived)

    return bad, observe


def link_passages(result):
    """{link: [(vid, entry, exit or None)]} in recorded entry order."""
    per_vehicle = {}
    for tr in result.trips:
        for k, lid in enumerate(tr.route[:len(tr.link_entries)]):
            x = tr.link_exits[k] if k < len(tr.link_exits) else None
            per_vehicle[(tr.vehicle_id, lid)] = (tr.link_entries[k], x)
    out = {}
    for lid, log in result.links.items():
        out[lid] = [(vid, *per_vehicle[(vid, lid)]) for vid, _ in log.entries]
    return out


def check_fifo(result) -> Violations:
    bad = Violations()
    for lid, rows in link_passages(result).items():
        entries = [e for _, e, _ in rows]
        if any(b < a for a, b in zip(entries, entries[1:])):
            bad.add(f"link {lid}: entries recorded out of time order")
        exits = [x for _, _, x in rows]
        done = [x for x in exits if x is not None]
        if exits[:len(done)] != done:
            bad.add(f"link {lid}: a later entrant left before an earlier one")
        if any(b < a for a, b in zip(done, done[1:])):
            bad.add(f"link {lid}: exit order differs from entry order")
        logged = [vid for vid, _ in result.links[lid].exits]
        if logged != [vid for vid, _, _ in rows][:len(logged)]:
            bad.add(f"link {lid}: exit log order differs from entry order")
    return bad


def check_capacity_storage(net, result) -> Violations:
    bad = Violations()
    for lid, rows in link_passages(result).items():
        link = net.links[lid]
        cap = link_capacity(link)
        exits = [x for _, _, x in rows if x is not None]
        for i in range(len(exits)):
            for j in range(i + 1, len(exits)):
                span = exits[j] - exits[i]
                if j - i + 1 > math.floor(cap * span + TOL) + 1:
                    bad.add(f"link {lid}: {j - i + 1} exits within {span:.6g} s")
                    break
        store = math.floor(storage_capacity(link))
        entries = [e for _, e, _ in rows]
        for m in range(store + 1, len(entries) + 1):
            blocker = rows[m - store - 1][2]
            if blocker is None or entries[m - 1] < blocker + wave_time(link) - TOL:
                bad.add(f"link {lid}: entrant {m} ignored the backward wave")
        for k, (_, e, _) in enumerate(rows):
            inside = sum(1 for _, e2, x2 in rows[:k + 1] if x2 is None or x2 > e)
            if inside > store:
                bad.add(f"link {lid}: {inside} vehicles exceed storage {store} at {e}")
    return bad


def check_gating(net, plans, result) -> Violations:
    bad = Violations()
    schedules = build_schedules(plans)
    by_node = {s.node: s for s in schedules.values()}
    for tr in result.trips:
        for k, x in enumerate(tr.link_exits):
            if k + 1 >= len(tr.route):
                continue
            lid, nxt = tr.route[k], tr.route[k + 1]
            sched = by_node.get(net.links[lid].to_node)
            if sched is None:
                continue
            m = net.movement_between(lid, nxt).id
            if not sched.is_green(m, x):
                bad.add(f"vehicle {tr.vehicle_id} crossed movement {m} on red at {x!r}")
    return bad


def check_instance(seed: int, signals: bool = True) -> Violations:
    net, trips, plans, crossings, horizon = random_instance(seed, signals)
    bad, observe = check_conservation(len(trips))
    res = run_simulation(net, trips, plans, horizon, crossings=crossings, observer=observe)
    if len(res.trips) != len(trips):
        bad.add("trip records lost")
    bad += check_fifo(res)
    bad += check_capacity_storage(net, res)
    bad += check_gating(net, plans, res)
    return Violations(f"seed {seed}: {m}" for m in bad)
