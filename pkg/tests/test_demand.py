import json

import pytest

from campusflow.demand import (DemandError, DemandProfile, ODPair, build_trips, cumulative_demand,
                               departure_times, load_demand, od_from_dict, poisson_departures,
                               total_demand)
from campusflow.fixtures import single_link
from campusflow.netgraph import LinkRecord, NetworkGraph, NodeRecord


def test_cumulative_demand_examples():
    assert cumulative_demand(DemandProfile([(0, 10, 0.5)]), 10) == 5.0
    assert cumulative_demand(DemandProfile([(5, 10, 0.5)]), 3) == 0.0
    assert cumulative_demand(DemandProfile([(0, 2, 1.0), (4, 6, 1.0)]), 5) == 3.0


def test_departure_times_examples():
    assert departure_times(DemandProfile([(0, 10, 0.5)])) == [2, 4, 6, 8, 10]
    assert departure_times(DemandProfile([(0, 2, 1.0), (2, 4, 0.0), (4, 6, 1.0)])) == [1, 2, 5, 6]
    assert departure_times(DemandProfile([(0, 100, 0.0)])) == []


def test_departure_count_with_inexact_products():
    p = DemandProfile([(0, 30, 0.1)])
    assert total_demand(p) == 3
    assert departure_times(p) == pytest.approx([10, 20, 30])


def test_profile_validation():
    with pytest.raises(DemandError):
        DemandProfile([(10, 5, 0.1)])
    with pytest.raises(DemandError):
        DemandProfile([(0, 10, -1.0)])
    with pytest.raises(DemandError):
        DemandProfile([(0, 10, 0.1), (5, 20, 0.1)])
    with pytest.raises(DemandError):
        ODPair(1, 1, DemandProfile([]))


def test_poisson_examples():
    assert poisson_departures(DemandProfile([(0, 100, 0.0)]), 3) == []
    p = DemandProfile([(0, 10000, 0.5)])
    a = poisson_departures(p, 42)
    assert a == poisson_departures(p, 42)
    assert 4400 <= len(a) <= 5600
    assert a == sorted(a) and all(0 <= t < 10000 for t in a)


def test_build_trips_single_link():
    fx = single_link(1)
    trips = build_trips(fx.net, [ODPair(1, 2, DemandProfile([(0, 10, 0.5)]))])
    assert [t.departure_s for t in trips] == [2, 4, 6, 8, 10]
    assert [t.vehicle_id for t in trips] == [1, 2, 3, 4, 5]
    assert all(t.route == (1,) for t in trips)


def test_build_trips_tie_break_by_declaration_order():
    net = NetworkGraph()
    for i in (1, 2, 3):
        net.add_node(NodeRecord(i, 77.2, 28.68))
    net.add_link(LinkRecord(1, 1, 2, 100.0, 10.0)).add_link(LinkRecord(2, 3, 2, 100.0, 10.0))
    ods = [ODPair(3, 2, DemandProfile([(0, 10, 0.1)])), ODPair(1, 2, DemandProfile([(0, 10, 0.1)]))]
    trips = build_trips(net, ods)
    assert [(t.vehicle_id, t.od_index, t.departure_s) for t in trips] == [(1, 0, 10.0), (2, 1, 10.0)]


def test_build_trips_unroutable_names_pair():
    fx = single_link(1)
    with pytest.raises(DemandError, match="2->1"):
        build_trips(fx.net, [ODPair(2, 1, DemandProfile([(0, 10, 0.5)]))])


def test_poisson_mode_needs_seed_and_is_reproducible():
    fx = single_link(1)
    ods = [ODPair(1, 2, DemandProfile([(0, 600, 0.2)]))]
    with pytest.raises(DemandError):
        build_trips(fx.net, ods, "poisson")
    assert build_trips(fx.net, ods, "poisson", 5) == build_trips(fx.net, ods, "poisson", 5)
    assert build_trips(fx.net, ods, "poisson", 5) != build_trips(fx.net, ods, "poisson", 6)


def test_demand_file(tmp_path):
    path = tmp_path / "d.json"
    path.write_text(json.dumps([{"origin": 1, "destination": 2,
                                 "profile": [{"start_s": 0, "end_s": 3600, "rate_vph": 360}]}]))
    (od,) = load_demand(path)
    assert od.profile.segments[0].rate_vps == pytest.approx(0.1)
    named = od_from_dict({"origin": "a", "destination": "b",
                          "profile": [{"start_s": 0, "end_s": 10, "rate_vph": 0}]},
                         {"a": 1, "b": 2}.__getitem__)
    assert (named.origin, named.destination) == (1, 2)
    path.write_text("{}")
    with pytest.raises(DemandError):
        load_demand(path)
