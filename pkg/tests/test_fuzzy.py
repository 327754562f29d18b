from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sixwheel.fuzzy import (HEADING_SETS, LATERAL_SETS, LEFT_WHEEL_RULES, RIGHT_WHEEL_RULES, SPEED_SETS,
                            ControllerConfig, MembershipDegrees, MembershipTriple, ZeroMembershipError,
                            control_step, defuzzify_area, fuzzify, infer)
from sixwheel.geo import OffsetPair


def clipped_area_numeric(lo, peak, hi, mu, n=200_001):
    """Area under min(triangle(lo, peak, hi), mu) by the trapezoid rule."""
    x = np.linspace(lo, hi, n)
    tri = np.interp(x, [lo, peak, hi], [0.0 if lo < peak else 1.0, 1.0, 0.0 if hi > peak else 1.0])
    return float(np.trapezoid(np.minimum(tri, mu), x))


def defuzzify_oracle(mu, v=SPEED_SETS):
    # the low and high sets are shoulders: half triangles standing on L1 and L3
    a = clipped_area_numeric(v.L1, v.L1, v.L2, mu[0])
    b = clipped_area_numeric(v.L1, v.L2, v.L3, mu[1])
    c = clipped_area_numeric(v.L2, v.L3, v.L3, mu[2])
    return (a * v.L1 + b * v.L2 + c * v.L3) / (a + b + c)


def test_triple_ordering_enforced():
    with pytest.raises(ValueError):
        MembershipTriple(-1, 0, 0, 1, 1)
    with pytest.raises(ValueError):
        MembershipTriple(0, -1, 0, 1, 1)
    assert LATERAL_SETS.replace(L3=5.0).L3 == 5.0


@pytest.mark.parametrize("value,expected", [
    (0.0, (0, 1, 0)),
    (-10.0, (1, 0, 0)),
    (-25.0, (1, 0, 0)),
    (5.0, (0, 0.5, 0.5)),
    (-2.5, (0.25, 0.75, 0)),
    (10.0, (0, 0, 1)),
])
def test_fuzzify_lateral_examples(value, expected):
    assert fuzzify(value, LATERAL_SETS) == pytest.approx(expected, abs=0)


@given(st.floats(-10, 10))
def test_fuzzify_partition_of_unity(v):
    mu = fuzzify(v, LATERAL_SETS)
    assert sum(mu) == pytest.approx(1.0, abs=1e-15)
    assert all(0.0 <= m <= 1.0 for m in mu)
    assert sum(m > 0 for m in mu) <= 2 and not (mu.mu0 > 0 and mu.mu2 > 0)


def test_rule_tables_mirror():
    for i, j in itertools.product(range(3), repeat=2):
        assert LEFT_WHEEL_RULES[2 - i][2 - j] == RIGHT_WHEEL_RULES[i][j]


def test_infer_examples():
    z = MembershipDegrees(0, 1, 0)
    assert infer(z, z, LEFT_WHEEL_RULES) == (0, 1, 0)
    left = MembershipDegrees(1, 0, 0)
    assert infer(left, left, LEFT_WHEEL_RULES) == (0, 0, 1)
    assert infer(MembershipDegrees(0.5, 0.5, 0), z, LEFT_WHEEL_RULES) == (0, 0.5, 0.5)


def test_infer_matches_enumeration():
    rng = np.random.default_rng(5)
    for _ in range(200):
        mux = fuzzify(rng.uniform(-12, 12), LATERAL_SETS)
        mut = fuzzify(rng.uniform(-1.2, 1.2), HEADING_SETS)
        for table in (LEFT_WHEEL_RULES, RIGHT_WHEEL_RULES):
            expect = [max([min(mut[i], mux[j]) for i in range(3) for j in range(3) if table[i][j] == k],
                          default=0.0) for k in range(3)]
            assert list(infer(mux, mut, table)) == expect


@pytest.mark.parametrize("mu,expected", [((0, 1, 0), 50.0), ((0, 0, 1), 100.0), ((1, 0, 0), 0.0)])
def test_defuzzify_examples(mu, expected):
    assert defuzzify_area(MembershipDegrees(*mu)) == expected


@pytest.mark.parametrize("a", [0.1, 0.37, 0.5, 1.0])
def test_defuzzify_symmetric_pair(a):
    assert defuzzify_area(MembershipDegrees(a, 0, a)) == pytest.approx(50.0, abs=1e-12)


def test_defuzzify_matches_numeric_area():
    rng = np.random.default_rng(9)
    for _ in range(30):
        mu = MembershipDegrees(*rng.uniform(0.05, 1.0, 3))
        assert defuzzify_area(mu) == pytest.approx(defuzzify_oracle(mu), abs=1e-6)


def test_defuzzify_all_zero_raises():
    with pytest.raises(ZeroMembershipError):
        defuzzify_area(MembershipDegrees(0, 0, 0))


def test_control_step_centred():
    cfg = ControllerConfig()
    assert control_step(OffsetPair(0.0, 0.0), cfg) == (0.5 * cfg.v_max, 0.5 * cfg.v_max)


def test_control_step_hard_left_steers_right():
    cfg = ControllerConfig()
    vl, vr = control_step(OffsetPair(-5.0, -90.0), cfg)
    assert vl == cfg.v_max and vr == 0.0


def test_config_validation_and_json():
    with pytest.raises(ValueError):
        ControllerConfig(x_sat=0.0)
    cfg = ControllerConfig(x_sat=0.5, x_params=MembershipTriple(-12, -8, 0, 9, 12))
    assert ControllerConfig.from_json(cfg.to_json()) == cfg
    assert ControllerConfig.from_json({"theta_params": [-1, -0.5, 0, 0.5, 1]}).theta_params.L1 == -0.5


@given(st.floats(-3, 3), st.floats(-120, 120))
def test_control_step_mirror_and_bounds(x, th):
    cfg = ControllerConfig()
    vl, vr = control_step(OffsetPair(x, th), cfg)
    ml, mr = control_step(OffsetPair(-x, -th), cfg)
    assert (vl, vr) == pytest.approx((mr, ml), abs=1e-12)
    assert 0.0 <= vl <= cfg.v_max and 0.0 <= vr <= cfg.v_max


def test_control_surface_continuity():
    cfg = ControllerConfig()
    step = 0.01
    xs = np.arange(-1.0, 1.0 + step / 2, step) * cfg.x_sat
    ths = np.arange(-1.0, 1.0 + step / 2, step) * cfg.theta_sat
    grid = np.array([[control_step(OffsetPair(x, t), cfg) for t in ths] for x in xs])
    # the clipped-area weights steepen the surface off the axes (about 2.65 v_max per unit)
    limit = 3.0 * cfg.v_max * step
    assert np.abs(np.diff(grid, axis=0)).max() < limit
    assert np.abs(np.diff(grid, axis=1)).max() < limit


def test_steering_monotone_in_lateral():
    cfg = ControllerConfig()
    xs = np.linspace(cfg.x_sat, -cfg.x_sat, 401)
    diff = [vr - vl for vl, vr in (control_step(OffsetPair(x, 0.0), cfg) for x in xs)]
    assert np.all(np.diff(diff) <= 1e-12)
