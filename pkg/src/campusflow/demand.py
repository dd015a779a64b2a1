"""Piecewise-constant origin-destination demand and its expansion into trips."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path

from .netgraph import NetworkGraph, NoPathError, shortest_path

# slack when flooring cumulative totals, so 0.1 * 30 style products count fully
COUNT_EPS = 1e-9


class DemandError(ValueError):
    pass


@dataclass(frozen=True)
class Segment:
    start_s: float
    end_s: float
    rate_vps: float


@dataclass(frozen=True)
class DemandProfile:
    segments: tuple[Segment, ...]

    def __init__(self, segments):
        segs = tuple(s if isinstance(s, Segment) else Segment(*map(float, s)) for s in segments)
        for s in segs:
            if not s.end_s > s.start_s:
                raise DemandError(f"segment [{s.start_s}, {s.end_s}) must have end > start")
            if s.rate_vps < 0 or not math.isfinite(s.rate_vps):
                raise DemandError(f"segment rate {s.rate_vps} must be finite and >= 0")
            if s.start_s < 0:
                raise DemandError("segments must start at t >= 0")
        for a, b in zip(segs, segs[1:]):
            if b.start_s < a.end_s:
                raise DemandError("segments must be sorted and non-overlapping")
        object.__setattr__(self, "segments", segs)

    def shifted(self, dt: float) -> DemandProfile:
        return DemandProfile([Segment(s.start_s + dt, s.end_s + dt, s.rate_vps) for s in self.segments])

    @property
    def max_rate(self) -> float:
        return max((s.rate_vps for s in self.segments), default=0.0)

    def rate_at(self, t: float) -> float:
        for s in self.segments:
            if s.start_s <= t < s.end_s:
                return s.rate_vps
        return 0.0


@dataclass(frozen=True)
class ODPair:
    origin: int
    destination: int
    profile: DemandProfile

    def __post_init__(self):
        if self.origin == self.destination:
            raise DemandError(f"OD pair origin and destination are both node {self.origin}")


@dataclass(frozen=True)
class TripRequest:
    vehicle_id: int
    od_index: int
    origin: int
    destination: int
    departure_s: float
    route: tuple[int, ...]


def cumulative_demand(p: DemandProfile, t: float) -> float:
    """Vehicles demanded on [0, t]."""
    total = 0.0
    for s in p.segments:
        if t <= s.start_s:
            break
        total += s.rate_vps * (min(t, s.end_s) - s.start_s)
    return total


def total_demand(p: DemandProfile) -> int:
    return math.floor(cumulative_demand(p, math.inf) + COUNT_EPS)


def departure_times(p: DemandProfile) -> list[float]:
    """t_k = inf{t : D(t) >= k} for k = 1 .. floor(D(inf))."""
    out = []
    n = total_demand(p)
    k = 1
    before = 0.0
    for s in p.segments:
        if k > n:
            break
        if s.rate_vps > 0:
            after = before + s.rate_vps * (s.end_s - s.start_s)
            while k <= n and k <= after + COUNT_EPS:
                t = s.start_s + (k - before) / s.rate_vps
                out.append(min(t, s.end_s))
                k += 1
            before = after
    return out


def poisson_departures(p: DemandProfile, seed: int) -> list[float]:
    """Inhomogeneous Poisson arrivals by thinning against the peak rate."""
    lam = p.max_rate
    if lam <= 0 or not p.segments:
        return []
    rng = random.Random(seed)
    t = p.segments[0].start_s
    end = p.segments[-1].end_s
    out = []
    while True:
        t += rng.expovariate(lam)
        if t >= end:
            return out
        if rng.random() * lam < p.rate_at(t):
            out.append(t)


def build_trips(net: NetworkGraph, ods: list[ODPair], mode: str = "deterministic",
                seed: int | None = None) -> list[TripRequest]:
    """Expand OD demand into trips with static free-flow routes.

    Vehicle ids follow (departure time, OD declaration order), starting at 1.
    In poisson mode OD ``i`` draws from its own stream derived from ``seed``.
    """
    routes = []
    for i, od in enumerate(ods):
        for node in (od.origin, od.destination):
            if node not in net.nodes:
                raise DemandError(f"OD pair {i} ({od.origin}->{od.destination}): node {node} not in network")
        try:
            routes.append(tuple(shortest_path(net, od.origin, od.destination)))
        except NoPathError as exc:
            raise DemandError(f"OD pair {i} ({od.origin}->{od.destination}) is unroutable") from exc
    stamped = []
    for i, od in enumerate(ods):
        if mode == "deterministic":
            times = departure_times(od.profile)
        elif mode == "poisson":
            if seed is None:
                raise DemandError("poisson mode requires a seed")
            times = poisson_departures(od.profile, f"{seed}/{i}")
        else:
            raise DemandError(f"unknown demand mode {mode!r}")
        stamped.extend((t, i) for t in times)
    stamped.sort()
    return [
        TripRequest(vid, i, ods[i].origin, ods[i].destination, t, routes[i])
        for vid, (t, i) in enumerate(stamped, start=1)
    ]


# --- file format -----------------------------------------------------------

def od_from_dict(d: dict, resolve=int) -> ODPair:
    """Rates in the document are vehicles/hour."""
    segs = [Segment(float(s["start_s"]), float(s["end_s"]), float(s["rate_vph"]) / 3600.0)
            for s in d["profile"]]
    return ODPair(resolve(d["origin"]), resolve(d["destination"]), DemandProfile(segs))


def od_to_dict(od: ODPair) -> dict:
    return {
        "origin": od.origin, "destination": od.destination,
        "profile": [{"start_s": s.start_s, "end_s": s.end_s, "rate_vph": s.rate_vps * 3600.0}
                    for s in od.profile.segments],
    }


def load_demand(path: str | Path, resolve=int) -> list[ODPair]:
    """OD list from a JSON array; ``resolve`` maps node references to ids."""
    with open(path, "rb") as fh:
        doc = json.load(fh)
    if not isinstance(doc, list):
        raise DemandError("demand file must hold a JSON array of OD entries")
    return [od_from_dict(d, resolve) for d in doc]
