import math

import pytest
from hypothesis import given, strategies as st

from nbfi.core import (
    FRAME_BITS,
    PALETTE,
    ConstraintViolation,
    Scenario,
    allocation_from_radii,
    dbm_to_w,
    single_bn_allocation,
    table1_palette,
    w_to_dbm,
)


def test_palette_values():
    pal = table1_palette()
    assert len(pal) == 4
    assert pal[0].t_data == pytest.approx(5.760)
    assert pal[0].t_listen == pytest.approx(60.0)
    assert pal[3].t_data == pytest.approx(0.01125)


@pytest.mark.parametrize("c", PALETTE, ids=lambda c: f"BN{c.bn}")
def test_palette_invariants(c):
    assert c.bitrate == c.delta
    assert c.t_data * c.bitrate == pytest.approx(FRAME_BITS)
    assert c.t_delay > c.t_data
    assert c.w_max - c.w_min == pytest.approx(c.t_rnd)


@given(st.floats(-200, 40))
def test_dbm_round_trip(x):
    assert abs(w_to_dbm(dbm_to_w(x)) - x) < 1e-9


def test_allocation_examples():
    assert allocation_from_radii([1, 0, 0, 0], 1).p == (1, 0, 0, 0)
    eq = allocation_from_radii([1, 0.75**0.5, 0.5**0.5, 0.5], 1)
    assert eq.p == pytest.approx((0.25,) * 4, abs=1e-12)
    assert allocation_from_radii([1, 1, 0, 0], 1).p == pytest.approx((0, 1, 0, 0))


@given(st.lists(st.floats(0, 1), min_size=3, max_size=3))
def test_allocation_shares_sum_to_one(fracs):
    r1 = 1.5
    inner = sorted((f * r1 for f in fracs), reverse=True)
    inner = [min(r, c.r_star) for r, c in zip(inner, PALETTE[1:])]
    inner = [min(inner[: k + 1]) for k in range(3)]
    a = allocation_from_radii([r1] + inner, r1)
    assert math.isclose(sum(a.p), 1.0, abs_tol=1e-12)
    assert all(0 <= p <= 1 for p in a.p)


@pytest.mark.parametrize(
    "radii, r1",
    [
        ([1, 0.5, 0.8, 0], 1),      # not ordered
        ([1, -0.1, 0, 0], 1),       # negative
        ([0.9, 0, 0, 0], 1),        # outer ring short of deployment edge
        ([1.2, 0, 0, 0], 1),        # beyond deployment edge
        ([7, 7, 0, 0], 7),          # BN2 beyond its range
    ],
)
def test_allocation_rejects(radii, r1):
    with pytest.raises(ConstraintViolation):
        allocation_from_radii(radii, r1)


def test_scenario_validation():
    a = single_bn_allocation(1, 1.0)
    for kw in ({"n_sensors": 0}, {"radius_r1": 0}, {"lambda_total": 0}, {"rl": 0}, {"b_ul": 51199}):
        args = {"n_sensors": 10, "radius_r1": 1.0, "lambda_total": 1.0, "allocation": a} | kw
        with pytest.raises(ConstraintViolation):
            Scenario(**args)


def test_scenario_helpers():
    s = Scenario(10, 1.0, 2.0, allocation_from_radii([1, 0.75**0.5, 0.5**0.5, 0.5], 1.0))
    assert sum(s.lambdas()) == pytest.approx(2.0)
    assert s.with_lambda(3.0).lambda_total == 3.0
    assert s.nu == pytest.approx(10 ** 0.7)
