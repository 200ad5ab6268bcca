import math

import pytest
from hypothesis import given, settings, strategies as st

from slipflat.model import (
    FlightState,
    SlipParams,
    StanceInput,
    StanceState,
    flight_to_stance,
    stance_to_flight,
    td_residual,
    to_residual,
)
from slipflat.flatness import flat_from_stance

P = SlipParams()


def stance_close(a: StanceState, b: StanceState, tol: float) -> bool:
    return all(abs(x - y) <= tol for x, y in zip(a.as_tuple(), b.as_tuple()))


class TestParams:
    def test_defaults_match_standard_runner(self):
        assert P.m == 80.0
        assert P.k == 11000.0
        assert P.ell0 == 1.0
        assert P.u2_max == 400.0
        assert P.u1_max == 0.1

    @pytest.mark.parametrize("field", ["m", "k", "ell0", "g", "u1_max", "u2_max", "w_max"])
    def test_positivity_enforced(self, field):
        with pytest.raises(ValueError):
            SlipParams(**{field: 0.0})
        with pytest.raises(ValueError):
            SlipParams(**{field: -1.0})


class TestChartChanges:
    def test_vertical_leg(self):
        x_s = flight_to_stance(FlightState(0.0, 0.0, 1.0, -1.0, math.pi / 2), 0.0)
        assert stance_close(x_s, StanceState(math.pi / 2, 0.0, 1.0, -1.0), 1e-14)

    def test_diagonal_case_by_hand(self):
        # (y=1, dy=2, z=1, dz=0) about the origin: worked by direct substitution.
        x_s = flight_to_stance(FlightState(1.0, 2.0, 1.0, 0.0, math.pi / 4), 0.0)
        expect = StanceState(math.pi / 4, -1.0, math.sqrt(2.0), math.sqrt(2.0))
        assert stance_close(x_s, expect, 1e-12)

    def test_back_map_vertical(self):
        x_f = stance_to_flight(StanceState(math.pi / 2, 0.0, 1.0, 2.0), 0.0)
        assert abs(x_f.y) < 1e-15
        assert abs(x_f.dy) < 1e-15
        assert abs(x_f.z - 1.0) < 1e-15
        assert abs(x_f.dz - 2.0) < 1e-15
        assert x_f.theta == math.pi / 2

    def test_back_map_pure_rotation(self):
        x_f = stance_to_flight(StanceState(math.pi / 2, 1.0, 1.0, 0.0), 0.0)
        assert abs(x_f.dy + 1.0) < 1e-15
        assert abs(x_f.dz) < 1e-15

    def test_back_map_inverts_diagonal_case(self):
        x_f = stance_to_flight(StanceState(math.pi / 4, -1.0, math.sqrt(2.0), math.sqrt(2.0)), 0.0)
        for got, want in zip(x_f.as_tuple(), (1.0, 2.0, 1.0, 0.0, math.pi / 4)):
            assert abs(got - want) < 1e-12

    def test_foot_offset_carried(self):
        x_s = flight_to_stance(FlightState(3.0, 1.0, 1.0, -0.5, 2.0), foot_y=2.5)
        back = stance_to_flight(x_s, foot_y=2.5)
        assert abs(back.y - 3.0) < 1e-12

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            flight_to_stance(FlightState(1.0, 0.0, 0.0, 0.0, 1.0), foot_y=1.0)

    @given(
        theta=st.floats(0.2, math.pi - 0.2),
        dtheta=st.floats(-5.0, 5.0),
        ell=st.floats(0.5, 1.5),
        dell=st.floats(-5.0, 5.0),
        foot_y=st.floats(-10.0, 10.0),
    )
    @settings(max_examples=300, deadline=None)
    def test_round_trip_from_stance(self, theta, dtheta, ell, dell, foot_y):
        x_s = StanceState(theta, dtheta, ell, dell)
        back = flight_to_stance(stance_to_flight(x_s, foot_y), foot_y)
        assert stance_close(back, x_s, 1e-10)

    def test_round_trip_bulk(self):
        import numpy as np

        rng = np.random.default_rng(0)
        worst = 0.0
        for _ in range(1000):
            x_s = StanceState(
                rng.uniform(0.2, math.pi - 0.2), rng.uniform(-5, 5),
                rng.uniform(0.5, 1.5), rng.uniform(-5, 5),
            )
            foot_y = rng.uniform(-5, 5)
            back = flight_to_stance(stance_to_flight(x_s, foot_y), foot_y)
            worst = max(worst, max(abs(a - b) for a, b in zip(back.as_tuple(), x_s.as_tuple())))
        assert worst < 1e-10

    @given(
        theta=st.floats(0.2, math.pi - 0.2),
        dtheta=st.floats(-5.0, 5.0),
        ell=st.floats(0.5, 1.5),
        dell=st.floats(-5.0, 5.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_angle_branch(self, theta, dtheta, ell, dell):
        x_f = stance_to_flight(StanceState(theta, dtheta, ell, dell), 0.0)
        got = flight_to_stance(x_f, 0.0)
        assert 0.0 < got.theta < math.pi


class TestEventResiduals:
    def test_td_residual_on_manifold(self):
        assert td_residual(FlightState(0, 0, 1.0, -1, math.pi / 2), P) == 0.0

    def test_td_residual_above(self):
        assert abs(td_residual(FlightState(0, 0, 1.5, 0, math.pi / 2), P) - 0.5) < 1e-15

    def test_td_residual_oblique(self):
        r = td_residual(FlightState(0, 0, 0.8, -1, 5 * math.pi / 6), P)
        assert abs(r - (0.8 - math.sin(5 * math.pi / 6))) < 1e-15

    def test_to_residual_passive_rest_length(self):
        r_eq, r_v = to_residual(StanceState(math.pi / 2, 0.0, P.ell0, 1.0), StanceInput(), P)
        assert abs(r_eq) < 1e-12
        assert abs(r_v - 1.0) < 1e-15

    def test_to_residual_compressed(self):
        r_eq, _ = to_residual(StanceState(math.pi / 2, 0.0, 0.95, 0.0), StanceInput(), P)
        assert abs(r_eq - (P.k / P.m) * 0.05) < 1e-12
        assert abs(r_eq - 6.875) < 1e-12

    @given(
        theta=st.floats(0.1, math.pi - 0.1),
        ell=st.floats(0.5, 1.5),
    )
    @settings(max_examples=200, deadline=None)
    def test_passive_sign_matches_spring_deflection(self, theta, ell):
        r_eq, _ = to_residual(StanceState(theta, 0.0, ell, 0.0), StanceInput(), P)
        if abs(ell - P.ell0) > 1e-12:
            assert math.copysign(1.0, r_eq) == math.copysign(1.0, P.ell0 - ell)

    @given(
        theta=st.floats(0.2, math.pi - 0.2),
        dtheta=st.floats(-5.0, 5.0),
        ell=st.floats(0.5, 1.5),
        dell=st.floats(-5.0, 5.0),
        u1=st.floats(-0.2, 0.2),
        u2=st.floats(-500.0, 500.0),
    )
    @settings(max_examples=300, deadline=None)
    def test_equality_residual_is_vertical_flat_acceleration(self, theta, dtheta, ell, dell, u1, u2):
        x_s = StanceState(theta, dtheta, ell, dell)
        u = StanceInput(u1, u2)
        r_eq, _ = to_residual(x_s, u, P)
        f = flat_from_stance(x_s, u, P)
        assert abs(r_eq - (f.ddz + P.g)) <= 1e-12

    def test_invalid_length_rejected(self):
        with pytest.raises(ValueError):
            to_residual(StanceState(1.0, 0.0, 0.0, 0.0), StanceInput(), P)
