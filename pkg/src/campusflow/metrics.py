"""Delay, queue and throughput indicators computed from kernel logs.

A vehicle counts as queued once it has spent longer on a link than the
link's free-flow time and has not yet left.  The mesoscopic model has no
positions inside a link, so queues are measured by delay rather than by a
speed threshold.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable

from .simcore import LinkLog, SimResult, TripRecord


class UndefinedDelay(ValueError):
    """Delay requested for a trip that did not finish within the horizon."""


@dataclass
class LinkSeries:
    """Piecewise-constant on-link and queue counts of one link.

    At every instant where a count jumps, two samples share the timestamp:
    the value just before and the value just after.  Trapezoidal integration
    over the samples is then exact.
    """

    link_id: int
    samples: list[tuple[float, int, int]]
    total_link_delay_s: float

    def max_queue(self) -> tuple[int, float | None]:
        best, when = 0, None
        for t, _, q in self.samples:
            if q > best:
                best, when = q, t
        return best, when


@dataclass
class NetworkSummary:
    total_travel_time_s: float
    total_delay_s: float
    completed_trips: int
    incomplete_trips: int
    mean_delay_s: float | None
    total_origin_wait_s: float
    link_delay_s: dict[int, float] = field(default_factory=dict)
    link_max_queue: dict[int, tuple[int, float | None]] = field(default_factory=dict)


def trip_delay(tr: TripRecord) -> float:
    """Elapsed time beyond free flow, origin waiting included."""
    if tr.arrive_s is None:
        raise UndefinedDelay(f"vehicle {tr.vehicle_id} did not arrive; delay undefined")
    return (tr.arrive_s - tr.depart_s) - tr.free_flow_s


def queue_length(log: LinkLog, free_flow_s: float, t: float) -> int:
    """Vehicles on the link at t that entered more than one free-flow time ago."""
    exits = {vid: x for vid, x in log.exits}
    n = 0
    for vid, entry in log.entries:
        if entry + free_flow_s < t and exits.get(vid, math.inf) > t:
            n += 1
    return n


def link_delay(log: LinkLog, free_flow_s: float) -> float:
    entries = dict(log.entries)
    return sum(x - entries[vid] - free_flow_s for vid, x in log.exits)


def link_series(log: LinkLog, free_flow_s: float) -> LinkSeries:
    exits = dict(log.exits)
    changes: dict[float, list[int]] = {}

    def bump(t, dc, dq):
        c = changes.setdefault(t, [0, 0])
        c[0] += dc
        c[1] += dq

    for vid, entry in log.entries:
        x = exits.get(vid, math.inf)
        bump(entry, 1, 0)
        joined = entry + free_flow_s
        if joined < x:
            bump(joined, 0, 1)
            if x != math.inf:
                bump(x, 0, -1)
        if x != math.inf:
            bump(x, -1, 0)
    samples = []
    count = queue = 0
    for t in sorted(changes):
        dc, dq = changes[t]
        if dc == 0 and dq == 0:
            continue
        samples.append((t, count, queue))
        count += dc
        queue += dq
        samples.append((t, count, queue))
    return LinkSeries(log.link_id, samples, link_delay(log, free_flow_s))


def integrate_queue(series: LinkSeries) -> float:
    """Trapezoidal integral of the queue count over the sample times."""
    area = 0.0
    for (t0, _, q0), (t1, _, q1) in zip(series.samples, series.samples[1:]):
        area += 0.5 * (q0 + q1) * (t1 - t0)
    return area


def summarize(result: SimResult, incomplete: str = "exclude") -> NetworkSummary:
    """Aggregate a run.

    ``incomplete="exclude"`` leaves unfinished trips out of the mean delay;
    ``"truncate"`` counts them with their elapsed time up to the end of the
    run minus the free-flow time of the links they finished.
    """
    completed = [tr for tr in result.trips if tr.completed]
    unfinished = [tr for tr in result.trips if not tr.completed]
    ttt = sum(tr.arrive_s - tr.depart_s for tr in completed)
    delays = [trip_delay(tr) for tr in completed]
    total_delay = sum(delays)
    if incomplete == "exclude":
        mean = total_delay / len(delays) if delays else None
    elif incomplete == "truncate":
        partial = []
        for tr in unfinished:
            if tr.depart_s > result.clock_end_s:
                continue
            done_ff = sum(result.link_free_flow_s[l] for l in tr.route[:len(tr.link_exits)])
            partial.append(result.clock_end_s - tr.depart_s - done_ff)
        both = delays + partial
        mean = sum(both) / len(both) if both else None
    else:
        raise ValueError(f"unknown incomplete-trip convention {incomplete!r}")
    per_link = {}
    max_queue = {}
    for lid, log in sorted(result.links.items()):
        series = link_series(log, result.link_free_flow_s[lid])
        per_link[lid] = series.total_link_delay_s
        max_queue[lid] = series.max_queue()
    return NetworkSummary(
        total_travel_time_s=ttt,
        total_delay_s=total_delay,
        completed_trips=len(completed),
        incomplete_trips=len(unfinished),
        mean_delay_s=mean,
        total_origin_wait_s=sum(tr.origin_wait_s for tr in completed),
        link_delay_s=per_link,
        link_max_queue=max_queue,
    )


def all_series(result: SimResult) -> list[LinkSeries]:
    return [link_series(log, result.link_free_flow_s[lid]) for lid, log in sorted(result.links.items())]


def hotspot_ranking(summary: NetworkSummary, k: int) -> list[int]:
    """Top-k links by accumulated delay; ties go to the lower link id."""
    if k < 1:
        raise ValueError("k must be >= 1")
    ranked = sorted(summary.link_delay_s.items(), key=lambda kv: (-kv[1], kv[0]))
    return [lid for lid, _ in ranked[:k]]


# --- CSV export --------------------------------------------------------------

TRIP_FIELDS = ["vehicle_id", "depart_s", "arrive_s", "origin_wait_s", "free_flow_s", "delay_s"]
LINK_FIELDS = ["link_id", "total_delay_s", "max_queue", "time_of_max_queue_s"]
SUMMARY_FIELDS = ["total_travel_time_s", "total_delay_s", "completed_trips", "incomplete_trips",
                  "mean_delay_s", "total_origin_wait_s"]
STATE_FIELDS = ["time_s", "link_id", "on_link_count", "queue_count"]


def fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return str(int(x))
    if isinstance(x, int):
        return str(x)
    out = format(float(x), ".6g")
    return "0" if out == "-0" else out


def _table(header: list[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def trips_csv(trips: Iterable[TripRecord]) -> str:
    rows = []
    for tr in sorted(trips, key=lambda tr: tr.vehicle_id):
        rows.append((tr.vehicle_id, tr.depart_s, tr.arrive_s, tr.origin_wait_s, tr.free_flow_s, tr.delay_s))
    return _table(TRIP_FIELDS, rows)


def links_csv(summary: NetworkSummary) -> str:
    rows = []
    for lid in sorted(summary.link_delay_s):
        q, when = summary.link_max_queue.get(lid, (0, None))
        rows.append((lid, summary.link_delay_s[lid], q, when))
    return _table(LINK_FIELDS, rows)


def summary_csv(summary: NetworkSummary) -> str:
    return _table(SUMMARY_FIELDS, [[getattr(summary, f) for f in SUMMARY_FIELDS]])


def state_csv(series: Iterable[LinkSeries]) -> str:
    rows = []
    for s in sorted(series, key=lambda s: s.link_id):
        for t, c, q in s.samples:
            rows.append((s.link_id, t, c, q))
    rows.sort(key=lambda r: (r[0], r[1]))
    return _table(STATE_FIELDS, [(t, lid, c, q) for lid, t, c, q in rows])


def export_csv(obj, destination: str | Path | IO[bytes] | None = None) -> bytes:
    """Render trips, a summary, or link series as CSV and optionally write it.

    ``obj`` may be a :class:`NetworkSummary` (summary row), a list of
    :class:`TripRecord`, or a list of :class:`LinkSeries`.  Use
    :func:`links_csv` for the per-link table.
    """
    if isinstance(obj, NetworkSummary):
        text = summary_csv(obj)
    else:
        items = list(obj)
        if items and isinstance(items[0], LinkSeries):
            text = state_csv(items)
        elif all(isinstance(i, TripRecord) for i in items):
            text = trips_csv(items)
        else:
            raise TypeError("export_csv expects a NetworkSummary, TripRecords or LinkSeries")
    data = text.encode("utf-8")
    if destination is None:
        return data
    if hasattr(destination, "write"):
        destination.write(data)
    else:
        with open(destination, "wb") as fh:
            fh.write(data)
    return data


def read_csv_rows(path: str | Path) -> list[dict[str, str]]:
    """Read a CSV written by this package, skipping ``#`` comment lines."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    return list(csv.DictReader(lines))
