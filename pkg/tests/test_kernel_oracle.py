"""Event-driven kernel against the fixed-step reference on every bundled fixture."""

import pytest

from campusflow import fixtures
from campusflow.simcore import run_simulation
from oracle import max_discrepancy, run_oracle

FIXTURES = fixtures.bundled()


def kernel(fx):
    return run_simulation(fx.net, fx.trips, fx.plans, fx.horizon_s, crossings=fx.crossings,
                          capacity_overrides=fx.capacity_overrides)


@pytest.mark.parametrize("fx", FIXTURES, ids=[f.name for f in FIXTURES])
@pytest.mark.parametrize("dt", [0.1, 0.01])
def test_matches_oracle_within_dt(fx, dt):
    assert max_discrepancy(kernel(fx), run_oracle(fx, dt)) <= dt + 1e-9


def test_bundled_fixture_sizes():
    for fx in FIXTURES:
        assert len(fx.net.links) <= 10
        assert len(fx.trips) <= 100


def test_discrepancy_shrinks_with_dt():
    fx = fixtures.unaligned_single()
    res = kernel(fx)
    steps = (0.1, 0.01, 0.001)
    d = [max_discrepancy(res, run_oracle(fx, dt)) for dt in steps]
    assert d[0] > d[1] > d[2] > 0
    # linear convergence: the error stays below one grid step at every resolution
    assert all(err <= dt for err, dt in zip(d, steps))
