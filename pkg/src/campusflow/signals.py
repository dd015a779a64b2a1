"""Fixed-time signal plans and periodic crossing capacity windows.

Green windows are half-open: a movement may discharge at the instant its
green starts but not at the instant it ends.  Within a cycle the phases
occupy consecutive windows, each followed by ``lost_time_s`` of all-red.

All time queries are pure.  Boundary comparisons carry a 1e-9 s guard so
that window starts computed by different arithmetic routes agree.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

log = logging.getLogger(__name__)

EPS = 1e-9
SUM_TOL = 1e-6


class SignalError(ValueError):
    pass


class PermanentRedError(SignalError):
    def __init__(self, signal_id, movement):
        super().__init__(f"movement {movement} has no green phase in signal {signal_id}")
        self.signal_id = signal_id
        self.movement = movement


@dataclass(frozen=True)
class Phase:
    green_s: float
    movements: frozenset[int]

    def __init__(self, green_s: float, movements):
        object.__setattr__(self, "green_s", float(green_s))
        object.__setattr__(self, "movements", frozenset(int(m) for m in movements))


@dataclass(frozen=True)
class SignalPlan:
    signal_id: int
    node: int
    cycle_s: float
    offset_s: float
    phases: tuple[Phase, ...]
    lost_time_s: float = 0.0
    # every movement at the junction; None means "those listed in phases"
    junction_movements: frozenset[int] | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "phases", tuple(self.phases))

    @property
    def movements(self) -> frozenset[int]:
        out: set[int] = set()
        for ph in self.phases:
            out |= ph.movements
        return frozenset(out)

    def windows(self) -> list[tuple[float, float, frozenset[int]]]:
        """Green windows as (start, end, movements) in cycle-local time."""
        out = []
        start = 0.0
        for ph in self.phases:
            out.append((start, start + ph.green_s, ph.movements))
            start += ph.green_s + self.lost_time_s
        return out

    def local_time(self, t: float) -> float:
        return (t - self.offset_s) % self.cycle_s

    def _check_movement(self, m: int):
        known = self.junction_movements if self.junction_movements is not None else self.movements
        if m not in known and m not in self.movements:
            raise SignalError(f"movement {m} is not at junction {self.node} (signal {self.signal_id})")

    def is_green(self, m: int, t: float) -> bool:
        self._check_movement(m)
        tau = self.local_time(t)
        for s, e, mv in self.windows():
            if m in mv and s - EPS <= tau < e - EPS:
                return True
        # tau just below the cycle end belongs to the first window of the next cycle
        s0, e0, mv0 = self.windows()[0]
        return m in mv0 and tau >= self.cycle_s - EPS

    def next_green_start(self, m: int, t: float) -> float:
        """Earliest time >= t at which ``m`` is green."""
        self._check_movement(m)
        if m not in self.movements:
            raise PermanentRedError(self.signal_id, m)
        if self.is_green(m, t):
            return t
        tau = self.local_time(t)
        best = math.inf
        for s, e, mv in self.windows():
            if m not in mv:
                continue
            delta = s - tau if s > tau else s + self.cycle_s - tau
            best = min(best, delta)
        return t + best

    def next_boundary(self, t: float) -> float:
        """Smallest window start or end strictly after t."""
        tau = self.local_time(t)
        if tau >= self.cycle_s - EPS:
            tau -= self.cycle_s
        cands = []
        for s, e, _ in self.windows():
            cands.extend((s, e))
        after = [c for c in cands if c > tau + EPS]
        if after:
            return t + (min(after) - tau)
        return t + (self.cycle_s - tau)

    def with_timing(self, offset_s: float, greens) -> SignalPlan:
        phases = tuple(Phase(g, ph.movements) for g, ph in zip(greens, self.phases))
        return SignalPlan(self.signal_id, self.node, self.cycle_s, offset_s % self.cycle_s,
                          phases, self.lost_time_s, self.junction_movements)


def validate_plan(plan: SignalPlan, net=None) -> list[str]:
    """Violations of plan invariants; empty means usable.

    With ``net`` given, movement membership at the plan's junction is checked
    as well.
    """
    report = []
    sid = plan.signal_id
    if not plan.cycle_s > 0:
        report.append(f"signal {sid}: cycle must be positive")
    if not 0 <= plan.offset_s < plan.cycle_s:
        report.append(f"signal {sid}: offset {plan.offset_s} outside [0, cycle)")
    if plan.lost_time_s < 0:
        report.append(f"signal {sid}: negative lost time")
    if not plan.phases:
        report.append(f"signal {sid}: no phases")
    for i, ph in enumerate(plan.phases):
        if not ph.green_s > 0:
            report.append(f"signal {sid}: phase {i} green must be positive")
        if not ph.movements:
            report.append(f"signal {sid}: phase {i} has no movements")
    total = sum(ph.green_s for ph in plan.phases) + len(plan.phases) * plan.lost_time_s
    if abs(total - plan.cycle_s) > SUM_TOL:
        report.append(f"signal {sid}: greens plus lost time sum to {total:g}, cycle is {plan.cycle_s:g}")
    if net is not None:
        if plan.node not in net.nodes:
            report.append(f"signal {sid}: node {plan.node} does not exist")
        for i, ph in enumerate(plan.phases):
            for m in sorted(ph.movements):
                mv = net.movements.get(m)
                if mv is None:
                    report.append(f"signal {sid}: phase {i} references missing movement {m}")
                elif net.links[mv.in_link].to_node != plan.node:
                    report.append(f"signal {sid}: movement {m} is not at node {plan.node}")
    return report


def unlisted_movements(plan: SignalPlan, net) -> list[int]:
    """Movements at the plan's junction that never receive green."""
    listed = plan.movements
    return sorted(mid for mid, mv in net.movements.items()
                  if net.links[mv.in_link].to_node == plan.node and mid not in listed)


class SignalSchedule:
    """A base plan with time-bounded replacement plans for one signal."""

    def __init__(self, base: SignalPlan, overrides=()):
        self.signal_id = base.signal_id
        self.node = base.node
        self.base = base
        self.overrides = sorted(overrides, key=lambda o: o[0])
        for (a0, b0, _), (a1, b1, _) in zip(self.overrides, self.overrides[1:]):
            if a1 < b0:
                raise SignalError(f"signal {self.signal_id}: overlapping plan overrides")
        self.movements = set(base.movements)
        for _, _, p in self.overrides:
            self.movements |= p.movements

    def _piece(self, t: float) -> tuple[float, float, SignalPlan]:
        prev_end = -math.inf
        for a, b, p in self.overrides:
            if t < a:
                return prev_end, a, self.base
            if t < b:
                return a, b, p
            prev_end = b
        return prev_end, math.inf, self.base

    def plan_at(self, t: float) -> SignalPlan:
        return self._piece(t)[2]

    def is_green(self, m: int, t: float) -> bool:
        plan = self.plan_at(t)
        return m in plan.movements and plan.is_green(m, t)

    def next_green_start(self, m: int, t: float) -> float:
        """Earliest green for ``m`` at or after t; inf if it never turns green."""
        if m not in self.movements:
            return math.inf
        cur = t
        for _ in range(len(self.overrides) * 2 + 2):
            a, b, plan = self._piece(cur)
            if m in plan.movements:
                g = plan.next_green_start(m, cur)
                if g < b:
                    return g
            if b == math.inf:
                return math.inf
            cur = b
        return math.inf

    def next_boundary(self, t: float) -> float:
        a, b, plan = self._piece(t)
        return min(plan.next_boundary(t), b)


def crossing_capacity_factor(w: CrossingWindow, t: float) -> float:
    return w.factor if w.active_at(t) else 1.0


@dataclass(frozen=True)
class CrossingWindow:
    """Periodic capacity reduction on one movement from pedestrian crossings.

    ``start_s``/``end_s`` optionally bound the pattern in time (used for
    scenario-scoped crossings); a finite ``start_s`` also anchors the period.
    """

    movement: int
    period_s: float
    active_s: float
    factor: float
    start_s: float = -math.inf
    end_s: float = math.inf

    def __post_init__(self):
        if not self.period_s > 0:
            raise SignalError("crossing period must be positive")
        if not 0 <= self.active_s <= self.period_s:
            raise SignalError("crossing active time must lie in [0, period]")
        if not 0 <= self.factor < 1:
            raise SignalError("crossing factor must lie in [0, 1)")

    @property
    def _anchor(self) -> float:
        return self.start_s if math.isfinite(self.start_s) else 0.0

    def _period_start(self, t: float) -> float:
        base = self._anchor + math.floor((t - self._anchor) / self.period_s) * self.period_s
        return base - self.period_s if base > t else base

    def active_at(self, t: float) -> bool:
        if not self.start_s <= t < self.end_s:
            return False
        if self.active_s in (0.0, self.period_s):
            return self.active_s > 0
        return t < self._period_start(t) + self.active_s

    def next_change(self, t: float) -> float:
        """Next instant after t at which :meth:`active_at` may flip."""
        if t < self.start_s:
            return self.start_s
        if t >= self.end_s:
            return math.inf
        if self.active_s in (0.0, self.period_s):
            return self.end_s
        base = self._period_start(t)
        # candidates are built from the period start, never from t, so a t
        # that rounds onto a boundary cannot yield a zero-length step
        for nxt in (base + self.active_s, base + self.period_s, base + self.period_s + self.active_s,
                    base + 2 * self.period_s):
            if nxt > t:
                return min(nxt, self.end_s)
        raise AssertionError("unreachable")


class CapacityProfile:
    """Time-varying capacity factor of every movement.

    factor(m, t) = (override factor if an override window covers t, else the
    movement's base factor) x product of active crossing factors.
    """

    def __init__(self, base: dict[int, float], overrides=(), crossings=()):
        self.base = dict(base)
        self.overrides: dict[int, list[tuple[float, float, float]]] = {}
        for m, a, b, f in overrides:
            if not f > 0:
                raise SignalError(f"capacity override for movement {m} must be positive")
            self.overrides.setdefault(m, []).append((a, b, f))
        self.crossings: dict[int, list[CrossingWindow]] = {}
        for w in crossings:
            self.crossings.setdefault(w.movement, []).append(w)

    def factor(self, m: int | None, t: float) -> float:
        if m is None:
            return 1.0
        f = self.base.get(m, 1.0)
        for a, b, of in self.overrides.get(m, ()):
            if a <= t < b:
                f = of
                break
        for w in self.crossings.get(m, ()):
            if w.active_at(t):
                f *= w.factor
        return f

    def max_factor(self, m: int | None) -> float:
        if m is None:
            return 1.0
        return max([self.base.get(m, 1.0)] + [f for _, _, f in self.overrides.get(m, ())])

    def next_change(self, m: int | None, t: float) -> float:
        if m is None:
            return math.inf
        cands = [math.inf]
        for a, b, _ in self.overrides.get(m, ()):
            if t < a:
                cands.append(a)
            elif t < b:
                cands.append(b)
        for w in self.crossings.get(m, ()):
            cands.append(w.next_change(t))
        return min(cands)


# --- file format -----------------------------------------------------------

def plan_from_dict(d: dict, net=None) -> SignalPlan:
    cycle = float(d["cycle_s"])
    offset = float(d.get("offset_s", 0.0))
    if not 0 <= offset < cycle:
        log.warning("signal %s: offset %g normalized modulo cycle %g", d["signal_id"], offset, cycle)
        offset %= cycle
    junction = None
    if net is not None:
        node = int(d["node"])
        junction = frozenset(mid for mid, mv in net.movements.items()
                             if net.links[mv.in_link].to_node == node)
    return SignalPlan(
        signal_id=int(d["signal_id"]),
        node=int(d["node"]),
        cycle_s=cycle,
        offset_s=offset,
        phases=tuple(Phase(p["green_s"], p["movements"]) for p in d["phases"]),
        lost_time_s=float(d.get("lost_time_s", 0.0)),
        junction_movements=junction,
    )


def plan_to_dict(p: SignalPlan) -> dict:
    return {
        "signal_id": p.signal_id, "node": p.node, "cycle_s": p.cycle_s,
        "offset_s": p.offset_s, "lost_time_s": p.lost_time_s,
        "phases": [{"green_s": ph.green_s, "movements": sorted(ph.movements)} for ph in p.phases],
    }


def crossing_from_dict(d: dict) -> CrossingWindow:
    return CrossingWindow(int(d["movement"]), float(d["period_s"]), float(d["active_s"]),
                          float(d["factor"]), float(d.get("start_s", -math.inf)),
                          float(d.get("end_s", math.inf)))


def crossing_to_dict(w: CrossingWindow) -> dict:
    d = {"movement": w.movement, "period_s": w.period_s, "active_s": w.active_s, "factor": w.factor}
    if w.start_s != -math.inf:
        d["start_s"] = w.start_s
    if w.end_s != math.inf:
        d["end_s"] = w.end_s
    return d


def signals_from_doc(doc, net=None) -> tuple[list[SignalPlan], list[CrossingWindow]]:
    """Accepts a bare plan array or ``{"signals": [...], "crossings": [...]}``."""
    if isinstance(doc, list):
        plans_doc, cross_doc = doc, []
    else:
        plans_doc, cross_doc = doc.get("signals", []), doc.get("crossings", [])
    plans = [plan_from_dict(d, net) for d in plans_doc]
    return plans, [crossing_from_dict(d) for d in cross_doc]


def load_signals(path: str | Path, net=None) -> tuple[list[SignalPlan], list[CrossingWindow]]:
    with open(path, "rb") as fh:
        return signals_from_doc(json.load(fh), net)


def signals_to_doc(plans, crossings=()) -> dict:
    return {"signals": [plan_to_dict(p) for p in plans],
            "crossings": [crossing_to_dict(w) for w in crossings]}
