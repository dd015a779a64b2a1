"""Default parameter tables.

Every default used elsewhere in the package is read from here so that a
single override point exists.  The values are conventional urban figures,
not calibrated ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass(frozen=True)
class Defaults:
    sat_flow_per_lane_vps: float = 0.5
    jam_density_per_lane_vpm: float = 0.15
    min_green_s: float = 5.0
    step_schedule_s: tuple[float, ...] = (8.0, 4.0, 2.0, 1.0)
    # penalty per incomplete trip, as a multiple of the horizon
    incomplete_penalty_horizons: float = 2.0
    earth_radius_m: float = 6_371_000.0


DEFAULTS = Defaults()


@dataclass(frozen=True)
class ClassDefault:
    speed_kmh: float
    lanes: int
    sat_flow_per_lane_vps: float = DEFAULTS.sat_flow_per_lane_vps
    jam_density_per_lane_vpm: float = DEFAULTS.jam_density_per_lane_vpm


@dataclass
class ClassDefaults:
    """Per road-class attributes plus OSM highway aliases and ignored classes."""

    table: dict[str, ClassDefault] = field(default_factory=lambda: {
        "motorway": ClassDefault(80.0, 3),
        "primary": ClassDefault(50.0, 2),
        "secondary": ClassDefault(40.0, 2),
        "residential": ClassDefault(30.0, 1),
        "service": ClassDefault(20.0, 1),
    })
    aliases: dict[str, str] = field(default_factory=lambda: {
        "motorway_link": "motorway",
        "trunk": "primary",
        "trunk_link": "primary",
        "primary_link": "primary",
        "secondary_link": "secondary",
        "tertiary": "secondary",
        "tertiary_link": "secondary",
        "unclassified": "residential",
        "living_street": "residential",
    })
    # highway values that carry no motor traffic
    ignored: frozenset[str] = frozenset({
        "footway", "path", "cycleway", "pedestrian", "steps", "track", "bridleway",
        "corridor", "construction", "proposed", "platform", "elevator", "bus_stop",
    })

    def resolve(self, highway: str) -> str | None:
        """Canonical class for an OSM highway value, None when ignored."""
        if highway in self.ignored:
            return None
        return self.aliases.get(highway, highway)

    @classmethod
    def from_dict(cls, doc: dict) -> ClassDefaults:
        out = cls()
        for name, rec in doc.get("table", {}).items():
            out.table[name] = ClassDefault(
                float(rec["speed_kmh"]), int(rec["lanes"]),
                float(rec.get("sat_flow_per_lane_vps", DEFAULTS.sat_flow_per_lane_vps)),
                float(rec.get("jam_density_per_lane_vpm", DEFAULTS.jam_density_per_lane_vpm)),
            )
        out.aliases.update(doc.get("aliases", {}))
        if "ignored" in doc:
            out.ignored = frozenset(doc["ignored"])
        return out
