"""Scenario definitions, sequential composition and run comparison.

A scenario adds demand on top of the base OD list and may replace signal
plans or movement capacities for a while.  Everything inside a scenario is
expressed relative to its window start; :func:`compose_sequential` lays
several scenarios end to end on one clock.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .demand import DemandProfile, ODPair, Segment, build_trips, od_from_dict
from .metrics import NetworkSummary, summarize
from .netgraph import NetworkGraph
from .signals import CrossingWindow, SignalPlan, crossing_from_dict, plan_from_dict, validate_plan
from .simcore import SimResult, run_simulation


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class PlanOverride:
    start_s: float
    end_s: float
    plan: SignalPlan


@dataclass(frozen=True)
class CapacityOverride:
    movement: int
    start_s: float
    end_s: float
    factor: float


@dataclass
class ScenarioSpec:
    """Times in overlays and overrides are relative to ``window[0]``."""

    name: str
    window: tuple[float, float]
    demand_overlays: list[ODPair] = field(default_factory=list)
    plan_overrides: list[PlanOverride] = field(default_factory=list)
    capacity_overrides: list[CapacityOverride] = field(default_factory=list)
    crossings: list[CrossingWindow] = field(default_factory=list)

    def __post_init__(self):
        start, end = self.window
        if not (math.isfinite(start) and math.isfinite(end)) or not end > start or start < 0:
            raise ScenarioError(f"scenario {self.name!r}: window [{start}, {end}) is malformed")
        _check_overlaps(self.name, self.plan_overrides)

    @property
    def duration_s(self) -> float:
        return self.window[1] - self.window[0]


@dataclass
class CompositionSpec:
    scenarios: list[ScenarioSpec]
    gap_s: float = 0.0


@dataclass
class ComparisonReport:
    baseline: NetworkSummary
    variant: NetworkSummary
    # metric -> (baseline, variant, absolute delta, relative delta or None)
    deltas: dict[str, tuple[float | None, float | None, float | None, float | None]]


COMPARED_METRICS = ("total_travel_time_s", "total_delay_s", "completed_trips",
                    "incomplete_trips", "mean_delay_s", "total_origin_wait_s")


def _check_overlaps(name: str, overrides: list[PlanOverride]):
    by_signal: dict[int, list[PlanOverride]] = {}
    for o in overrides:
        by_signal.setdefault(o.plan.signal_id, []).append(o)
    for sid, lst in by_signal.items():
        lst = sorted(lst, key=lambda o: o.start_s)
        for a, b in zip(lst, lst[1:]):
            if b.start_s < a.end_s:
                raise ScenarioError(
                    f"scenario {name!r}: plan overrides for signal {sid} overlap "
                    f"([{a.start_s}, {a.end_s}) and [{b.start_s}, {b.end_s}))")


def load_aliases(path: str | Path) -> dict[str, int]:
    with open(path, "rb") as fh:
        return {str(k): int(v) for k, v in json.load(fh).items()}


def load_scenario(document, net: NetworkGraph, aliases: dict[str, int] | None = None) -> ScenarioSpec:
    """Parse and validate a scenario JSON document (bytes, str or dict).

    Node references may be integer ids or names from ``aliases``.
    """
    if isinstance(document, (bytes, bytearray, str)):
        doc = json.loads(document)
    else:
        doc = document
    aliases = aliases or {}
    name = str(doc.get("name", "scenario"))

    def resolve(ref):
        if isinstance(ref, str) and not ref.lstrip("-").isdigit():
            if ref not in aliases:
                raise ScenarioError(f"scenario {name!r}: unknown alias {ref!r}")
            nid = aliases[ref]
        else:
            nid = int(ref)
        if nid not in net.nodes:
            raise ScenarioError(f"scenario {name!r}: node {ref!r} is not in the network")
        return nid

    try:
        w = doc["window"]
        window = (float(w["start_s"]), float(w["end_s"]))
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"scenario {name!r}: window missing or malformed") from exc
    duration = window[1] - window[0]
    overlays = [od_from_dict(d, resolve) for d in doc.get("demand_overlays", [])]
    plans = []
    for d in doc.get("plan_overrides", []):
        d = dict(d)
        if "node" in d:
            d["node"] = resolve(d["node"])
        active = d.pop("active", {})
        plan = plan_from_dict(d, net)
        problems = validate_plan(plan, net)
        if problems:
            raise ScenarioError(f"scenario {name!r}: " + "; ".join(problems))
        plans.append(PlanOverride(float(active.get("start_s", 0.0)),
                                  float(active.get("end_s", duration)), plan))
    caps = []
    for d in doc.get("capacity_overrides", []):
        m = int(d["movement"])
        if m not in net.movements:
            raise ScenarioError(f"scenario {name!r}: capacity override on unknown movement {m}")
        caps.append(CapacityOverride(m, float(d.get("start_s", 0.0)), float(d.get("end_s", duration)),
                                     float(d["factor"])))
    crossings = []
    for d in doc.get("crossings", []):
        d = dict(d)
        d.setdefault("start_s", 0.0)
        d.setdefault("end_s", duration)
        crossings.append(crossing_from_dict(d))
    return ScenarioSpec(name, window, overlays, plans, caps, crossings)


def load_scenario_file(path: str | Path, net: NetworkGraph, aliases=None) -> ScenarioSpec:
    return load_scenario(Path(path).read_bytes(), net, aliases)


def apply_overlays(base: list[ODPair], spec: ScenarioSpec) -> list[ODPair]:
    """Base demand followed by the scenario's overlays shifted to its window."""
    start = spec.window[0]
    return list(base) + [replace(od, profile=od.profile.shifted(start)) for od in spec.demand_overlays]


def _translated(spec: ScenarioSpec, shift: float) -> ScenarioSpec:
    """Same scenario with every relative time moved by ``shift``."""
    return ScenarioSpec(
        spec.name,
        spec.window,
        [replace(od, profile=od.profile.shifted(shift)) for od in spec.demand_overlays],
        [PlanOverride(o.start_s + shift, o.end_s + shift, o.plan) for o in spec.plan_overrides],
        [CapacityOverride(c.movement, c.start_s + shift, c.end_s + shift, c.factor)
         for c in spec.capacity_overrides],
        [replace(w, start_s=w.start_s + shift, end_s=w.end_s + shift) for w in spec.crossings],
    )


def compose_sequential(c: CompositionSpec) -> ScenarioSpec:
    """Chain scenarios so each starts where the previous ended plus the gap."""
    if not c.scenarios:
        raise ScenarioError("composition needs at least one scenario")
    if c.gap_s < 0:
        raise ScenarioError("gap must be >= 0")
    if len(c.scenarios) == 1:
        return c.scenarios[0]
    first = c.scenarios[0]
    origin = first.window[0]
    cursor = origin
    parts = []
    for spec in c.scenarios:
        parts.append(_translated(spec, cursor - origin))
        cursor += spec.duration_s + c.gap_s
    end = cursor - c.gap_s
    merged = ScenarioSpec(
        "+".join(s.name for s in c.scenarios),
        (origin, end),
        [od for p in parts for od in p.demand_overlays],
        [o for p in parts for o in p.plan_overrides],
        [co for p in parts for co in p.capacity_overrides],
        [w for p in parts for w in p.crossings],
    )
    return merged


@dataclass
class SimInputs:
    ods: list[ODPair]
    plan_overrides: list[tuple[float, float, SignalPlan]]
    capacity_overrides: list[tuple[int, float, float, float]]
    crossings: list[CrossingWindow]


def scenario_inputs(base: list[ODPair], spec: ScenarioSpec | None,
                    crossings=()) -> SimInputs:
    """Absolute-time kernel inputs for ``spec`` layered on the base demand."""
    if spec is None:
        return SimInputs(list(base), [], [], list(crossings))
    start = spec.window[0]
    return SimInputs(
        apply_overlays(base, spec),
        [(o.start_s + start, o.end_s + start, o.plan) for o in spec.plan_overrides],
        [(c.movement, c.start_s + start, c.end_s + start, c.factor) for c in spec.capacity_overrides],
        list(crossings) + [replace(w, start_s=w.start_s + start, end_s=w.end_s + start)
                           for w in spec.crossings],
    )


def run_scenario(net: NetworkGraph, base: list[ODPair], plans: list[SignalPlan],
                 spec: ScenarioSpec | None, horizon_s: float, *, crossings=(),
                 mode: str = "deterministic", seed: int | None = None,
                 record_events: bool = False) -> SimResult:
    inputs = scenario_inputs(base, spec, crossings)
    trips = build_trips(net, inputs.ods, mode, seed)
    return run_simulation(net, trips, plans, horizon_s, crossings=inputs.crossings,
                          capacity_overrides=inputs.capacity_overrides,
                          plan_overrides=inputs.plan_overrides, record_events=record_events)


def compare_runs(baseline: NetworkSummary, variant: NetworkSummary) -> ComparisonReport:
    """Per-metric variant minus baseline; relative deltas use the baseline."""
    deltas = {}
    for m in COMPARED_METRICS:
        b = getattr(baseline, m)
        v = getattr(variant, m)
        if b is None or v is None:
            deltas[m] = (b, v, None, None)
            continue
        d = v - b
        rel = d / b if b != 0 else None
        deltas[m] = (b, v, d, rel)
    return ComparisonReport(baseline, variant, deltas)


def summary_from_row(row: dict[str, str]) -> NetworkSummary:
    """Rebuild the scalar part of a summary from a ``summary.csv`` row."""
    def num(key, cast=float):
        val = row.get(key, "")
        return None if val == "" else cast(float(val))

    return NetworkSummary(
        total_travel_time_s=num("total_travel_time_s"),
        total_delay_s=num("total_delay_s"),
        completed_trips=num("completed_trips", int),
        incomplete_trips=num("incomplete_trips", int),
        mean_delay_s=num("mean_delay_s"),
        total_origin_wait_s=num("total_origin_wait_s"),
    )


def summarize_scenario(net, base, plans, spec, horizon_s, **kw) -> NetworkSummary:
    return summarize(run_scenario(net, base, plans, spec, horizon_s, **kw))


def surge_profile(levels) -> DemandProfile:
    """Profile from (start_s, end_s, veh/h) triples."""
    return DemandProfile([Segment(a, b, r / 3600.0) for a, b, r in levels])
