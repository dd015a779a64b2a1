import json

import pytest

from campusflow.signals import (CapacityProfile, CrossingWindow, Phase, PermanentRedError,
                                SignalError, SignalPlan, SignalSchedule, crossing_capacity_factor,
                                load_signals, plan_from_dict, plan_to_dict, signals_to_doc,
                                unlisted_movements, validate_plan)
from campusflow.fixtures import cross


def plan(offset=0.0, greens=(30.0, 30.0), lost=0.0, cycle=60.0):
    return SignalPlan(1, 5, cycle, offset, (Phase(greens[0], [1]), Phase(greens[1], [2])), lost)


def test_validate_plan_examples():
    assert validate_plan(plan()) == []
    assert any("sum" in r for r in validate_plan(plan(greens=(30.0, 20.0))))
    assert validate_plan(plan(greens=(25.0, 25.0), lost=5.0)) == []


def test_validate_plan_other_violations():
    assert validate_plan(plan(offset=60.0))
    assert validate_plan(SignalPlan(1, 5, 60.0, 0.0, (Phase(60.0, []),)))
    bad_node = SignalPlan(1, 1, 60.0, 0.0, (Phase(30.0, [1]), Phase(30.0, [2])))
    assert any("not at node" in r for r in validate_plan(bad_node, cross().net))


def test_is_green_examples():
    p = plan()
    assert p.is_green(1, 29.999)
    assert not p.is_green(1, 30.0)
    assert p.is_green(2, 30.0)
    shifted = plan(offset=10.0)
    assert shifted.is_green(1, 10.0) and shifted.is_green(1, 39.9)
    assert not shifted.is_green(1, 5.0) and not shifted.is_green(1, 40.0)
    assert p.is_green(1, 123.0) == p.is_green(1, 3.0)


def test_is_green_unknown_movement():
    with pytest.raises(SignalError):
        plan().is_green(99, 0.0)


def test_next_green_start_examples():
    p = plan()
    assert p.next_green_start(1, 45.0) == 60.0
    assert p.next_green_start(1, 15.0) == 15.0
    assert plan(offset=10.0).next_green_start(1, 0.0) == 10.0


def test_next_green_start_permanent_red():
    p = SignalPlan(1, 5, 60.0, 0.0, (Phase(60.0, [1]),), junction_movements=frozenset({1, 2}))
    with pytest.raises(PermanentRedError):
        p.next_green_start(2, 0.0)
    assert not p.is_green(2, 0.0)


def test_lost_time_windows():
    p = plan(greens=(25.0, 25.0), lost=5.0)
    assert p.windows()[1][:2] == (30.0, 55.0)
    assert not p.is_green(1, 27.0) and not p.is_green(2, 27.0)
    assert p.next_boundary(27.0) == 30.0
    assert p.next_boundary(0.0) == 25.0


def test_crossing_capacity_factor_examples():
    w = CrossingWindow(1, 60.0, 15.0, 0.3)
    assert crossing_capacity_factor(w, 10.0) == 0.3
    assert crossing_capacity_factor(w, 20.0) == 1.0
    assert crossing_capacity_factor(w, 70.0) == 0.3


def test_crossing_window_validation():
    with pytest.raises(SignalError):
        CrossingWindow(1, 60.0, 70.0, 0.3)
    with pytest.raises(SignalError):
        CrossingWindow(1, 60.0, 10.0, 1.0)


def test_bounded_crossing_anchored_at_start():
    w = CrossingWindow(1, 40.0, 10.0, 0.0, start_s=105.0, end_s=200.0)
    assert crossing_capacity_factor(w, 100.0) == 1.0
    assert crossing_capacity_factor(w, 105.0) == 0.0
    assert crossing_capacity_factor(w, 116.0) == 1.0
    assert crossing_capacity_factor(w, 145.0) == 0.0
    assert crossing_capacity_factor(w, 205.0) == 1.0


def test_capacity_profile_combines_sources():
    cp = CapacityProfile({1: 0.8}, [(1, 100.0, 200.0, 0.5)], [CrossingWindow(1, 60.0, 15.0, 0.5)])
    assert cp.factor(1, 30.0) == pytest.approx(0.8)
    assert cp.factor(1, 10.0) == pytest.approx(0.4)
    assert cp.factor(1, 150.0) == pytest.approx(0.5)
    assert cp.factor(1, 181.0) == pytest.approx(0.25)
    assert cp.factor(None, 0.0) == 1.0


def test_schedule_overrides():
    base = plan()
    alt = plan(greens=(50.0, 10.0))
    s = SignalSchedule(base, [(120.0, 240.0, alt)])
    assert not s.is_green(1, 45.0)
    assert s.is_green(1, 165.0)
    assert s.next_green_start(1, 235.0) == 240.0
    with pytest.raises(SignalError):
        SignalSchedule(base, [(0.0, 100.0, alt), (50.0, 150.0, alt)])


def test_offset_normalized_on_load(caplog):
    d = plan_to_dict(plan())
    d["offset_s"] = -10.0
    assert plan_from_dict(d).offset_s == 50.0
    assert "normalized" in caplog.text


def test_unlisted_movements_warns():
    fx = cross()
    p = SignalPlan(1, 5, 60.0, 0.0, (Phase(60.0, [1]),))
    assert unlisted_movements(p, fx.net) == [2]


def test_signal_file_round_trip(tmp_path):
    fx = cross()
    path = tmp_path / "s.json"
    path.write_text(json.dumps(signals_to_doc(fx.plans, [CrossingWindow(1, 60.0, 10.0, 0.2)])))
    plans, crossings = load_signals(path, fx.net)
    assert plans == fx.plans
    assert crossings == [CrossingWindow(1, 60.0, 10.0, 0.2)]
    path.write_text(json.dumps([plan_to_dict(p) for p in fx.plans]))
    assert load_signals(path)[0] == fx.plans


def test_crossing_boundary_rounding():
    # 1.9 + 0.95 rounds to 2.8499999999999996, right on the end of an active spell
    w = CrossingWindow(1, 1.9, 0.95, 0.0)
    t = 1.9 + 0.95
    assert not w.active_at(t)
    assert w.next_change(t) == 1.9 * 2
    assert w.next_change(1.9 * 2 - 1e-12) > 1.9 * 2 - 1e-12
