"""Signal timing search: coordinate descent over green splits and offsets.

Every candidate is scored by a full simulation run.  The objective is total
delay of completed trips plus a fixed penalty for each trip that is still
unfinished at the horizon, so cutting trips off cannot pose as improvement.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .config import DEFAULTS
from .demand import ODPair, build_trips
from .metrics import summarize
from .netgraph import NetworkGraph
from .scenarios import ScenarioSpec, scenario_inputs
from .signals import SignalPlan, validate_plan
from .simcore import run_simulation

log = logging.getLogger(__name__)

# slack below which a move counts as annihilated by the bounds
MOVE_TOL = 1e-9


class OptimizerError(ValueError):
    pass


@dataclass(frozen=True)
class Param:
    name: str
    signal_index: int
    kind: str            # "offset" or "green"
    phase: int | None
    lo: float
    hi: float


@dataclass(frozen=True)
class PlanVector:
    """Flat parameter vector over a fixed list of plans.

    Cycle lengths and lost times are taken from ``plans`` and never change.
    Single-phase signals have no free green parameter.
    """

    plans: tuple[SignalPlan, ...]
    params: tuple[Param, ...]
    values: tuple[float, ...]
    min_green_s: float = DEFAULTS.min_green_s

    @classmethod
    def from_plans(cls, plans, min_green_s: float = DEFAULTS.min_green_s,
                   optimize_offsets: bool = True) -> PlanVector:
        plans = tuple(sorted(plans, key=lambda p: p.signal_id))
        params, values = [], []
        for si, p in enumerate(plans):
            if optimize_offsets:
                params.append(Param(f"s{p.signal_id}_offset", si, "offset", None, 0.0, p.cycle_s))
                values.append(p.offset_s)
            n = len(p.phases)
            if n < 2:
                continue
            usable = p.cycle_s - n * p.lost_time_s
            hi = usable - (n - 1) * min_green_s
            for k, ph in enumerate(p.phases):
                if ph.green_s < min_green_s - MOVE_TOL:
                    raise OptimizerError(f"signal {p.signal_id}: phase {k} green {ph.green_s:g} "
                                         f"below minimum {min_green_s:g}")
                params.append(Param(f"s{p.signal_id}_g{k + 1}", si, "green", k, min_green_s, hi))
                values.append(ph.green_s)
        v = cls(plans, tuple(params), tuple(values), min_green_s)
        v.decode()
        return v

    def decode(self) -> list[SignalPlan]:
        """Plans for these values; raises OptimizerError if any is invalid."""
        offsets = {si: p.offset_s for si, p in enumerate(self.plans)}
        greens = {si: [ph.green_s for ph in p.phases] for si, p in enumerate(self.plans)}
        for prm, val in zip(self.params, self.values):
            if prm.kind == "offset":
                offsets[prm.signal_index] = val
            else:
                greens[prm.signal_index][prm.phase] = val
        out = []
        for si, p in enumerate(self.plans):
            plan = p.with_timing(offsets[si], greens[si])
            problems = validate_plan(plan)
            low = [g for g in greens[si] if g < self.min_green_s - MOVE_TOL] if len(p.phases) > 1 else []
            if problems or low:
                raise OptimizerError("; ".join(problems) or f"signal {p.signal_id}: green below minimum")
            out.append(plan)
        return out

    def with_values(self, values) -> PlanVector:
        return PlanVector(self.plans, self.params, tuple(float(x) for x in values), self.min_green_s)

    def as_dict(self) -> dict[str, float]:
        return {prm.name: val for prm, val in zip(self.params, self.values)}


def perturb_plan(v: PlanVector, index: int, step_s: float, direction: int) -> tuple[PlanVector, bool]:
    """Move one parameter by ``direction * step_s``.

    Green moves are balanced by the other phases of the same signal so the
    cycle is preserved: time taken from them is split in proportion to
    their slack above the minimum green, time given back in proportion to
    their current greens.  Offsets wrap modulo the cycle.  Returns the new
    vector and a flag that is True when the bounds left nothing to move (the
    vector is then returned unchanged).
    """
    prm = v.params[index]
    vals = list(v.values)
    plan = v.plans[prm.signal_index]
    if prm.kind == "offset":
        vals[index] = (vals[index] + direction * step_s) % plan.cycle_s
        return v.with_values(vals), False

    peers = [j for j, q in enumerate(v.params)
             if q.kind == "green" and q.signal_index == prm.signal_index and j != index]
    delta = direction * step_s
    target = min(max(vals[index] + delta, prm.lo), prm.hi)
    delta = target - vals[index]
    if delta > 0:
        slack = [vals[j] - v.params[j].lo for j in peers]
        total = sum(slack)
        delta = min(delta, total)
        weights = [s / total for s in slack] if total > 0 else [0.0] * len(peers)
    else:
        total = sum(vals[j] for j in peers)
        weights = [vals[j] / total for j in peers]
    if abs(delta) <= MOVE_TOL:
        return v, True
    cycle_green = vals[index] + sum(vals[j] for j in peers)
    vals[index] += delta
    for j, w in zip(peers, weights):
        vals[j] -= delta * w
    # absorb rounding in the last peer so the cycle sum stays exact
    vals[peers[-1]] = cycle_green - vals[index] - sum(vals[j] for j in peers[:-1])
    return v.with_values(vals), False


@dataclass
class Problem:
    """Fixed inputs of an objective: network, demand and scenario."""

    net: NetworkGraph
    demand: list[ODPair]
    scenario: ScenarioSpec | None = None
    horizon_s: float = 3600.0
    incomplete_penalty_s: float | None = None
    crossings: list = field(default_factory=list)
    mode: str = "deterministic"
    seed: int | None = None

    def __post_init__(self):
        if self.incomplete_penalty_s is None:
            self.incomplete_penalty_s = DEFAULTS.incomplete_penalty_horizons * self.horizon_s
        self._inputs = scenario_inputs(self.demand, self.scenario, self.crossings)
        self._trips = build_trips(self.net, self._inputs.ods, self.mode, self.seed)

    def objective(self, v: PlanVector) -> float:
        plans = v.decode()
        result = run_simulation(self.net, self._trips, plans, self.horizon_s,
                                crossings=self._inputs.crossings,
                                capacity_overrides=self._inputs.capacity_overrides,
                                plan_overrides=self._inputs.plan_overrides)
        s = summarize(result)
        return s.total_delay_s + self.incomplete_penalty_s * s.incomplete_trips


def evaluate_plan(net: NetworkGraph, demand: list[ODPair], scenario: ScenarioSpec | None,
                  v: PlanVector, *, horizon_s: float = 3600.0,
                  incomplete_penalty_s: float | None = None, **kw) -> float:
    """Total delay (plus incomplete-trip penalties) under the plans of ``v``."""
    v.decode()
    return Problem(net, demand, scenario, horizon_s, incomplete_penalty_s, **kw).objective(v)


@dataclass
class TraceRecord:
    iteration: int
    values: tuple[float, ...]
    objective: float
    step_s: float
    accepted: bool


@dataclass
class SearchTrace:
    params: tuple[Param, ...]
    budget: int
    records: list[TraceRecord] = field(default_factory=list)
    best_index: int = 0
    best: PlanVector | None = None

    @property
    def best_objective(self) -> float:
        return self.records[self.best_index].objective

    def best_so_far(self) -> list[float]:
        out, cur = [], float("inf")
        for r in self.records:
            cur = min(cur, r.objective)
            out.append(cur)
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\r\n")
        w.writerow(["iteration", *[p.name for p in self.params], "objective", "step_s", "accepted"])
        for r in self.records:
            w.writerow([r.iteration, *[format(x, ".6g") for x in r.values],
                        format(r.objective, ".6g"), format(r.step_s, "g"), int(r.accepted)])
        return buf.getvalue()


def hill_climb(problem: Problem, v0: PlanVector, step_schedule=DEFAULTS.step_schedule_s,
               budget: int = 200) -> SearchTrace:
    """Coordinate descent with a shrinking step.

    Parameters are visited in order; for each, +step then -step is tried and
    the first strict improvement is kept.  A full sweep without acceptance
    moves to the next (smaller) step; the search ends when the schedule or
    the evaluation budget runs out.  Moves the bounds annihilate cost no
    evaluation.
    """
    if budget < 1:
        raise OptimizerError("budget must be >= 1")
    steps = [float(s) for s in step_schedule if s >= 1]
    if not steps:
        raise OptimizerError("step schedule has no step of at least 1 s")
    trace = SearchTrace(v0.params, budget)
    current = v0
    best = problem.objective(v0)
    trace.records.append(TraceRecord(0, v0.values, best, steps[0], True))
    trace.best = v0

    level = 0
    while level < len(steps) and len(trace.records) < budget:
        step = steps[level]
        accepted_any = False
        for i in range(len(current.params)):
            for direction in (1, -1):
                if len(trace.records) >= budget:
                    break
                cand, clamped = perturb_plan(current, i, step, direction)
                if clamped:
                    continue
                obj = problem.objective(cand)
                ok = obj < best
                trace.records.append(TraceRecord(len(trace.records), cand.values, obj, step, ok))
                if ok:
                    current, best = cand, obj
                    trace.best_index = len(trace.records) - 1
                    trace.best = cand
                    accepted_any = True
                    log.debug("accept %s objective %.6g", cand.as_dict(), obj)
                    break
        if not accepted_any:
            level += 1
    return trace


@dataclass
class OptimizerConfig:
    budget: int = 200
    step_schedule_s: tuple[float, ...] = DEFAULTS.step_schedule_s
    min_green_s: float = DEFAULTS.min_green_s
    incomplete_trip_penalty_s: float | None = None
    optimize_offsets: bool = True

    @classmethod
    def from_dict(cls, d: dict) -> OptimizerConfig:
        unknown = set(d) - {"budget", "step_schedule_s", "min_green_s",
                            "incomplete_trip_penalty_s", "optimize_offsets"}
        if unknown:
            raise OptimizerError(f"unknown optimizer config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.step_schedule_s = tuple(float(s) for s in cfg.step_schedule_s)
        if cfg.budget < 1:
            raise OptimizerError("budget must be >= 1")
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> OptimizerConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))
