import math

import numpy as np
import pytest

from reacsim.core import PlanarTrace
from reacsim.spline import derive_profile, fit_spline

from conftest import make_state


def trace_from(xy, start_frame=0, dt=0.1):
    return PlanarTrace.from_xy(start_frame, dt, np.asarray(xy, dtype=float))


class TestFitSpline:
    def test_linear_reproduction(self):
        xy = [[t, 2.0 * t] for t in (0.0, 1.0, 2.0, 3.0)]
        pair = fit_spline(trace_from(xy, dt=0.1))
        for t in np.linspace(0.0, 0.3, 13):
            x, y = pair.position(t)
            assert x == pytest.approx(10.0 * t, abs=1e-10)
            assert y == pytest.approx(20.0 * t, abs=1e-10)

    def test_collinear_constant_derivative(self):
        pair = fit_spline(trace_from([[0.0, 0.0], [1.0, 0.5], [2.0, 1.0]]))
        slopes = [pair.velocity(t) for t in np.linspace(0.0, 0.2, 9)]
        for dx, dy in slopes:
            assert dx == pytest.approx(10.0, abs=1e-9)
            assert dy == pytest.approx(5.0, abs=1e-9)

    def test_interpolates_knots(self, rng):
        xy = rng.uniform(-50, 50, (10, 2))
        trace = trace_from(xy, start_frame=4)
        pair = fit_spline(trace)
        for i, (x, y) in enumerate(trace.points):
            t = (trace.start_frame + i) * trace.dt
            px, py = pair.position(t)
            assert abs(px - x) < 1e-10
            assert abs(py - y) < 1e-10

    def test_needs_three_points(self):
        with pytest.raises(ValueError):
            fit_spline(trace_from([[0.0, 0.0], [1.0, 1.0]]))


class TestDeriveProfile:
    def test_straight_constant_speed(self):
        xy = [[i * 1.0, 0.0] for i in range(10)]
        traj = derive_profile(trace_from(xy), make_state())
        assert np.allclose(traj.speeds(), 10.0, atol=1e-9)
        assert np.allclose(traj.headings(), 0.0, atol=1e-12)
        assert np.allclose(traj.positions(), np.asarray(xy), atol=0.0)

    def test_slope_two_heading(self):
        xy = [[i * 0.5, i * 1.0] for i in range(8)]
        traj = derive_profile(trace_from(xy), make_state())
        expected = math.atan2(2.0, 1.0)
        assert np.allclose(traj.headings(), expected, atol=1e-9)
        assert expected == pytest.approx(1.10715, abs=1e-5)

    def test_stationary_holds_template_heading(self):
        xy = [[2.0, 3.0]] * 6
        traj = derive_profile(trace_from(xy), make_state(psi=0.8))
        assert np.allclose(traj.speeds(), 0.0)
        assert np.allclose(traj.headings(), 0.8)

    def test_speed_never_negative(self, rng):
        for _ in range(20):
            xy = rng.uniform(-20, 20, (12, 2))
            traj = derive_profile(trace_from(xy), make_state())
            assert np.all(traj.speeds() >= 0.0)

    def test_heading_holds_through_slow_patch(self):
        # a long standstill after motion: slow knots reuse the last confident
        # heading instead of the noisy derivative direction
        xy = [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]] + [[2.2, 0.0]] * 8
        v_eps = 0.5
        traj = derive_profile(trace_from(xy), make_state(psi=0.0), v_eps=v_eps)
        speeds = traj.speeds()
        assert (speeds < v_eps).any()
        confident = 0.0
        for state, v in zip(traj.states, speeds):
            if v >= v_eps:
                confident = state.psi
            else:
                assert state.psi == confident

    def test_footprint_copied_from_template(self):
        xy = [[i * 1.0, 0.0] for i in range(5)]
        traj = derive_profile(trace_from(xy), make_state(length=5.2, width=2.3))
        assert all(s.length == 5.2 and s.width == 2.3 for s in traj.states)

    def test_collinear_speed_matches_finite_difference(self):
        xy = [[i * 0.73, i * -0.21] for i in range(9)]
        trace = trace_from(xy)
        traj = derive_profile(trace, make_state())
        fd_speed = math.hypot(0.73, -0.21) / trace.dt
        assert np.allclose(traj.speeds(), fd_speed, atol=1e-9)
