import math
import sys
from pathlib import Path

import numpy as np
import pytest

from reacsim.core import PlanarTrace, Trajectory
from reacsim.ingest import MapData, Polyline
from reacsim.kinematics import (
    BicycleControl,
    BicycleGeometry,
    KinematicBounds,
    bicycle_rollout,
    particle_rollout,
)
from reacsim.predictors import (
    BicycleHeadAdapter,
    ConstantControlPredictor,
    ConstantVelocityPredictor,
    ExternalPredictorHandle,
    LaneFollowPredictor,
    NoisyPredictor,
    ObservationWindow,
    OracleReplayPredictor,
    OutputKind,
    ParticleHeadAdapter,
    PredictionOutput,
    PredictorError,
    PredictorTimeout,
    ProtocolError,
    TransportError,
)
from reacsim.synthetic import straight_trajectory

from conftest import make_state

STUB = [sys.executable, str(Path(__file__).parent / "stub_predictor.py")]


def obs_from(history: Trajectory, map_data=None, neighbors=None) -> ObservationWindow:
    return ObservationWindow(history, neighbors or {}, map_data, history.dt)


def straight_obs(speed=10.0, heading=0.0, n=10, origin=(0.0, 0.0)):
    return obs_from(straight_trajectory(n, speed, heading, origin))


class TestPredictionOutput:
    def test_payload_must_match_kind(self):
        with pytest.raises(ValueError):
            PredictionOutput(OutputKind.POSITIONS)
        with pytest.raises(ValueError):
            PredictionOutput(
                OutputKind.POSITIONS,
                positions=PlanarTrace(0, 0.1, ((0.0, 0.0),)),
                bicycle_controls=(BicycleControl(0, 0),),
            )


class TestConstantVelocity:
    def test_straight_spacing(self):
        out = ConstantVelocityPredictor(30).predict(straight_obs())
        xy = out.positions.xy()
        assert len(xy) == 30
        assert np.allclose(np.diff(xy[:, 0]), 1.0)
        assert np.allclose(xy[:, 1], 0.0)
        assert out.positions.start_frame == 10

    def test_stationary(self):
        out = ConstantVelocityPredictor(30).predict(straight_obs(speed=0.0))
        assert np.allclose(out.positions.xy(), out.positions.xy()[0])

    def test_heading_pi_over_two(self):
        out = ConstantVelocityPredictor(30).predict(straight_obs(speed=5.0, heading=math.pi / 2))
        xy = out.positions.xy()
        assert np.allclose(np.diff(xy[:, 1]), 0.5, atol=1e-12)
        assert np.allclose(xy[:, 0], 0.0, atol=1e-9)

    def test_translation_equivariance(self):
        base = ConstantVelocityPredictor(30).predict(straight_obs()).positions.xy()
        moved = (
            ConstantVelocityPredictor(30)
            .predict(straight_obs(origin=(100.0, -50.0)))
            .positions.xy()
        )
        assert np.allclose(moved, base + np.array([100.0, -50.0]), atol=1e-9)


class TestConstantControl:
    def test_recovers_generating_controls(self):
        geom = BicycleGeometry.from_length(4.0, 0.5)
        u = BicycleControl(1.0, 0.1)
        history = bicycle_rollout(make_state(v=8.0), [u] * 9, geom, 0.1)
        out = ConstantControlPredictor(30, lr_ratio=0.5).predict(obs_from(history))
        assert len(out.bicycle_controls) == 30
        fitted = out.bicycle_controls[0]
        assert fitted.a == pytest.approx(1.0, abs=1e-9)
        assert fitted.beta == pytest.approx(0.1, abs=1e-9)
        assert all(c == fitted for c in out.bicycle_controls)

    def test_translation_equivariance(self):
        geom = BicycleGeometry.from_length(4.0, 0.5)
        u = BicycleControl(0.5, -0.05)
        hist = bicycle_rollout(make_state(v=6.0), [u] * 9, geom, 0.1)
        moved_states = tuple(
            make_state(s.x + 20.0, s.y + 7.0, s.psi, s.v) for s in hist.states
        )
        moved = Trajectory(hist.start_frame, hist.dt, moved_states)
        a = ConstantControlPredictor(10).predict(obs_from(hist)).bicycle_controls
        b = ConstantControlPredictor(10).predict(obs_from(moved)).bicycle_controls
        assert a == b

    def test_controls_respect_bounds(self):
        # an absurd history: speed jumps far beyond the acceleration cap
        states = (make_state(v=0.0), make_state(x=1.0, v=50.0), make_state(x=2.0, v=0.0))
        out = ConstantControlPredictor(5, bounds=KinematicBounds()).predict(
            obs_from(Trajectory(0, 0.1, states))
        )
        assert all(abs(c.a) <= 8.0 and abs(c.beta) <= 0.6 for c in out.bicycle_controls)


class TestLaneFollow:
    MAP = MapData((Polyline("lane", "centerline", ((0.0, 0.0), (200.0, 0.0))),))

    def test_advances_along_lane(self):
        obs = obs_from(straight_trajectory(10, 10.0, 0.0, (0.0, 1.5)), self.MAP)
        out = LaneFollowPredictor(30).predict(obs)
        xy = out.positions.xy()
        assert np.allclose(xy[:, 1], 0.0)  # snapped onto the centerline
        assert np.allclose(np.diff(xy[:, 0]), 1.0)

    def test_requires_map(self):
        with pytest.raises(PredictorError):
            LaneFollowPredictor(30).predict(straight_obs())


class TestOracleReplay:
    def test_returns_logged_future(self):
        log = straight_trajectory(90, speed=7.0)
        predictor = OracleReplayPredictor(log, 30)
        obs = obs_from(log.window(0, 10))
        out = predictor.predict(obs)
        assert np.allclose(out.positions.xy(), log.positions()[10:40], atol=0.0)

    def test_extends_past_log_end(self):
        log = straight_trajectory(20, speed=10.0)
        out = OracleReplayPredictor(log, 30).predict(obs_from(log.window(0, 10)))
        xy = out.positions.xy()
        assert len(xy) == 30
        assert np.allclose(np.diff(xy[:, 0]), 1.0, atol=1e-9)


class TestNoisy:
    def test_seeded_determinism(self):
        a = NoisyPredictor(ConstantVelocityPredictor(30), 0.3, seed=7)
        b = NoisyPredictor(ConstantVelocityPredictor(30), 0.3, seed=7)
        assert a.predict(straight_obs()).positions == b.predict(straight_obs()).positions

    def test_noise_bounded_and_nonzero(self):
        noisy = NoisyPredictor(ConstantVelocityPredictor(30), 0.3, seed=7)
        clean = ConstantVelocityPredictor(30).predict(straight_obs()).positions.xy()
        jittered = noisy.predict(straight_obs()).positions.xy()
        delta = jittered - clean
        assert np.abs(delta).max() <= 0.3
        assert np.abs(delta).max() > 0.0

    def test_requires_positions_head(self):
        with pytest.raises(ValueError):
            NoisyPredictor(ConstantControlPredictor(30), 0.3, seed=0)


class TestHeadAdapters:
    def test_bicycle_adapter_tracks_inner_positions(self):
        adapter = BicycleHeadAdapter(ConstantVelocityPredictor(30))
        obs = straight_obs()
        out = adapter.predict(obs)
        assert out.kind is OutputKind.BICYCLE_CONTROLS
        roll = bicycle_rollout(
            obs.current, list(out.bicycle_controls), BicycleGeometry.from_length(4.0), 0.1
        )
        target = ConstantVelocityPredictor(30).predict(obs).positions.xy()
        assert np.allclose(roll.positions()[1:], target, atol=1e-6)

    def test_particle_adapter_tracks_inner_positions(self):
        adapter = ParticleHeadAdapter(ConstantVelocityPredictor(30))
        obs = straight_obs(speed=6.0, heading=0.4)
        out = adapter.predict(obs)
        roll = particle_rollout(obs.current, list(out.particle_controls), 0.1)
        target = ConstantVelocityPredictor(30).predict(obs).positions.xy()
        assert np.allclose(roll.positions()[1:], target, atol=1e-9)


class TestExternalClient:
    def make_handle(self, mode, timeout_ms=2000):
        return ExternalPredictorHandle(
            STUB + [mode], OutputKind.POSITIONS, 0.1, 10, 30, timeout_ms=timeout_ms
        )

    def test_matches_in_process_constant_velocity(self):
        obs = straight_obs(speed=9.0, heading=0.3)
        expected = ConstantVelocityPredictor(30).predict(obs).positions.xy()
        with self.make_handle("cv") as handle:
            got = handle.predict(obs).positions.xy()
        assert np.abs(got - expected).max() < 1e-9

    def test_short_prediction_is_protocol_error(self):
        with self.make_handle("short") as handle:
            with pytest.raises(ProtocolError, match="expected 30"):
                handle.predict(straight_obs())

    def test_nan_payload_is_protocol_error(self):
        with self.make_handle("nan") as handle:
            with pytest.raises(ProtocolError, match="non-finite"):
                handle.predict(straight_obs())

    def test_garbage_is_protocol_error(self):
        with self.make_handle("garbage") as handle:
            with pytest.raises(ProtocolError, match="not valid JSON"):
                handle.predict(straight_obs())

    def test_timeout(self):
        with self.make_handle("mute", timeout_ms=300) as handle:
            with pytest.raises(PredictorTimeout):
                handle.predict(straight_obs())

    def test_process_death_is_transport_error(self):
        with self.make_handle("die") as handle:
            with pytest.raises(TransportError):
                handle.predict(straight_obs())
