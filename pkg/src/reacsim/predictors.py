"""Prediction interface, in-process baselines, and the external-process client.

A predictor maps an observation window to either a positional trace or a
control sequence of fixed horizon length. The backbone is pluggable: simple
heuristic baselines ship in-process, and any external model can serve
predictions over a line-delimited JSON protocol on its stdin/stdout.
"""
from __future__ import annotations

import json
import math
import os
import selectors
import subprocess
import time
from dataclasses import dataclass
from enum import Enum
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from .core import AgentState, PlanarTrace, Trajectory
from .ingest import MapData
from .kinematics import (
    BicycleControl,
    BicycleGeometry,
    KinematicBounds,
    ParticleControl,
    clamp_bicycle,
    controls_from_states,
    fit_bicycle_controls,
    fit_particle_controls,
)

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT_MS = 2000


class OutputKind(str, Enum):
    POSITIONS = "positions"
    BICYCLE_CONTROLS = "bicycle_controls"
    PARTICLE_CONTROLS = "particle_controls"


class PredictorError(RuntimeError):
    """A predictor could not produce a usable prediction."""


@dataclass(frozen=True)
class ObservationWindow:
    """What the simulated agent can see when predicting.

    ``target_history`` covers the observation frames ending just before the
    current time step; neighbor histories are clipped to the same window and
    to the observable radius around the target's latest position.
    """

    target_history: Trajectory
    neighbor_histories: dict[str, Trajectory]
    map: MapData | None
    dt: float

    @property
    def current(self) -> AgentState:
        """Most recent observed state of the target."""
        return self.target_history.states[-1]

    @property
    def current_frame(self) -> int:
        """The frame being predicted from (one past the observed history)."""
        return self.target_history.end_frame


@dataclass(frozen=True)
class PredictionOutput:
    """One prediction: exactly one payload, matching ``kind``."""

    kind: OutputKind
    positions: PlanarTrace | None = None
    bicycle_controls: tuple[BicycleControl, ...] | None = None
    particle_controls: tuple[ParticleControl, ...] | None = None

    def __post_init__(self) -> None:
        payloads = {
            OutputKind.POSITIONS: self.positions,
            OutputKind.BICYCLE_CONTROLS: self.bicycle_controls,
            OutputKind.PARTICLE_CONTROLS: self.particle_controls,
        }
        present = [k for k, v in payloads.items() if v is not None]
        if present != [self.kind]:
            raise ValueError(f"prediction of kind {self.kind} must carry exactly that payload")

    def __len__(self) -> int:
        if self.positions is not None:
            return len(self.positions)
        if self.bicycle_controls is not None:
            return len(self.bicycle_controls)
        return len(self.particle_controls)  # type: ignore[arg-type]


@runtime_checkable
class Predictor(Protocol):
    output_kind: OutputKind

    def predict(self, obs: ObservationWindow) -> PredictionOutput:
        ...


class ConstantVelocityPredictor:
    """Zero-acceleration extrapolation of the target's latest state."""

    output_kind = OutputKind.POSITIONS

    def __init__(self, horizon: int) -> None:
        self.horizon = horizon

    def predict(self, obs: ObservationWindow) -> PredictionOutput:
        s = obs.current
        step_x = s.v * math.cos(s.psi) * obs.dt
        step_y = s.v * math.sin(s.psi) * obs.dt
        points = tuple(
            (s.x + (i + 1) * step_x, s.y + (i + 1) * step_y) for i in range(self.horizon)
        )
        return PredictionOutput(
            OutputKind.POSITIONS, positions=PlanarTrace(obs.current_frame, obs.dt, points)
        )


class ConstantControlPredictor:
    """Bicycle controls fitted from the recent history and held constant."""

    output_kind = OutputKind.BICYCLE_CONTROLS

    def __init__(
        self,
        horizon: int,
        lr_ratio: float = 0.5,
        bounds: KinematicBounds | None = None,
        fit_frames: int = 3,
    ) -> None:
        self.horizon = horizon
        self.lr_ratio = lr_ratio
        self.bounds = bounds or KinematicBounds()
        self.fit_frames = fit_frames

    def predict(self, obs: ObservationWindow) -> PredictionOutput:
        hist = obs.target_history
        tail = hist.states[-self.fit_frames :]
        current = tail[-1]
        geom = BicycleGeometry.from_length(current.length, self.lr_ratio)
        if len(tail) < 2:
            u = BicycleControl(0.0, 0.0)
        else:
            fits = controls_from_states(Trajectory(0, obs.dt, tail), geom)
            u = BicycleControl(
                float(np.mean([f.a for f in fits])), float(np.mean([f.beta for f in fits]))
            )
        u = clamp_bicycle(u, self.bounds)
        return PredictionOutput(
            OutputKind.BICYCLE_CONTROLS, bicycle_controls=tuple([u] * self.horizon)
        )


class LaneFollowPredictor:
    """Project onto the nearest map centerline and advance at current speed."""

    output_kind = OutputKind.POSITIONS

    def __init__(self, horizon: int) -> None:
        self.horizon = horizon

    def predict(self, obs: ObservationWindow) -> PredictionOutput:
        if obs.map is None or not obs.map.centerlines():
            raise PredictorError("lane-follow requires a map with centerlines")
        s = obs.current
        lane = min(obs.map.centerlines(), key=lambda p: p.project((s.x, s.y))[1])
        arc0, _ = lane.project((s.x, s.y))
        speed = abs(s.v)
        points = tuple(
            lane.point_at(arc0 + (i + 1) * speed * obs.dt) for i in range(self.horizon)
        )
        return PredictionOutput(
            OutputKind.POSITIONS, positions=PlanarTrace(obs.current_frame, obs.dt, points)
        )


class OracleReplayPredictor:
    """Return the logged future of the target; validates the harness.

    Where the log runs out before the horizon does, the last logged state is
    extrapolated at constant velocity, which keeps successive predictions
    consistent with each other.
    """

    output_kind = OutputKind.POSITIONS

    def __init__(self, truth: Trajectory, horizon: int) -> None:
        self.truth = truth
        self.horizon = horizon

    def predict(self, obs: ObservationWindow) -> PredictionOutput:
        t = obs.current_frame
        points: list[tuple[float, float]] = []
        last = self.truth.states[-1]
        for k in range(t, t + self.horizon):
            if self.truth.start_frame <= k < self.truth.end_frame:
                s = self.truth.state_at(k)
                points.append((s.x, s.y))
            else:
                steps = k - (self.truth.end_frame - 1)
                points.append(
                    (
                        last.x + steps * last.v * math.cos(last.psi) * obs.dt,
                        last.y + steps * last.v * math.sin(last.psi) * obs.dt,
                    )
                )
        return PredictionOutput(
            OutputKind.POSITIONS, positions=PlanarTrace(t, obs.dt, tuple(points))
        )


class NoisyPredictor:
    """Add seeded zero-mean uniform positional noise to a positions baseline.

    Used to stress closed-loop stability with a controllable perturbation
    magnitude; deterministic for a fixed seed and call sequence.
    """

    output_kind = OutputKind.POSITIONS

    def __init__(self, inner: Predictor, magnitude: float, seed: int) -> None:
        if inner.output_kind is not OutputKind.POSITIONS:
            raise ValueError("noise wrapper requires a positions-head predictor")
        self.inner = inner
        self.magnitude = magnitude
        self.rng = np.random.default_rng(seed)

    def predict(self, obs: ObservationWindow) -> PredictionOutput:
        out = self.inner.predict(obs)
        trace = out.positions
        assert trace is not None
        noise = self.rng.uniform(-self.magnitude, self.magnitude, (len(trace), 2))
        return PredictionOutput(
            OutputKind.POSITIONS,
            positions=PlanarTrace.from_xy(trace.start_frame, trace.dt, trace.xy() + noise),
        )


class BicycleHeadAdapter:
    """Re-encode a positions-head baseline into bounded bicycle controls.

    This is how any positional predictor drives the bicycle decoding
    settings: the waypoints are fitted to per-frame (a, beta) controls from
    the target's current state, with the bounds clamping infeasible motion.
    """

    output_kind = OutputKind.BICYCLE_CONTROLS

    def __init__(
        self,
        inner: Predictor,
        lr_ratio: float = 0.5,
        bounds: KinematicBounds | None = None,
    ) -> None:
        if inner.output_kind is not OutputKind.POSITIONS:
            raise ValueError("head adapter requires a positions-head predictor")
        self.inner = inner
        self.lr_ratio = lr_ratio
        self.bounds = bounds or KinematicBounds()

    def predict(self, obs: ObservationWindow) -> PredictionOutput:
        trace = self.inner.predict(obs).positions
        assert trace is not None
        geom = BicycleGeometry.from_length(obs.current.length, self.lr_ratio)
        controls = fit_bicycle_controls(obs.current, trace.xy(), geom, obs.dt, self.bounds)
        return PredictionOutput(OutputKind.BICYCLE_CONTROLS, bicycle_controls=tuple(controls))


class ParticleHeadAdapter:
    """Re-encode a positions-head baseline into bounded accelerations."""

    output_kind = OutputKind.PARTICLE_CONTROLS

    def __init__(self, inner: Predictor, bounds: KinematicBounds | None = None) -> None:
        if inner.output_kind is not OutputKind.POSITIONS:
            raise ValueError("head adapter requires a positions-head predictor")
        self.inner = inner
        self.bounds = bounds or KinematicBounds()

    def predict(self, obs: ObservationWindow) -> PredictionOutput:
        trace = self.inner.predict(obs).positions
        assert trace is not None
        controls = fit_particle_controls(obs.current, trace.xy(), obs.dt, self.bounds)
        return PredictionOutput(OutputKind.PARTICLE_CONTROLS, particle_controls=tuple(controls))


class ExternalPredictorError(PredictorError):
    """Base for failures on the external predictor boundary.

    Carries the raw exchange (what was sent and received) for diagnosis.
    """

    def __init__(self, message: str, exchange: str = "") -> None:
        super().__init__(message if not exchange else f"{message}\nexchange: {exchange}")
        self.exchange = exchange


class ProtocolError(ExternalPredictorError):
    """The peer answered with a malformed or contract-violating message."""


class PredictorTimeout(ExternalPredictorError):
    """No response arrived within the configured timeout."""


class TransportError(ExternalPredictorError):
    """The peer process died or closed its stream."""


def _finite_pairs(rows: object, n: int, what: str, raw: str) -> list[tuple[float, float]]:
    if not isinstance(rows, list) or len(rows) != n:
        got = len(rows) if isinstance(rows, list) else type(rows).__name__
        raise ProtocolError(f"{what}: expected {n} entries, got {got}", raw)
    out = []
    for row in rows:
        if not isinstance(row, list) or len(row) != 2:
            raise ProtocolError(f"{what}: entries must be [a, b] pairs", raw)
        a, b = row
        if not (isinstance(a, (int, float)) and isinstance(b, (int, float))):
            raise ProtocolError(f"{what}: non-numeric entry {row!r}", raw)
        if not (math.isfinite(a) and math.isfinite(b)):
            raise ProtocolError(f"{what}: non-finite entry {row!r}", raw)
        out.append((float(a), float(b)))
    return out


class ExternalPredictorHandle:
    """Line-delimited JSON client for a predictor subprocess.

    One request is in flight at a time. The handle is bound to its process:
    use it from a single simulation loop.
    """

    output_kind: OutputKind

    def __init__(
        self,
        command: Sequence[str],
        output_kind: OutputKind,
        dt: float,
        t_obs: int,
        horizon: int,
        timeout_ms: int = DEFAULT_TIMEOUT_MS,
    ) -> None:
        self.output_kind = OutputKind(output_kind)
        self.horizon = horizon
        self.timeout_ms = timeout_ms
        self._buffer = b""
        self._proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
        )
        assert self._proc.stdout is not None
        os.set_blocking(self._proc.stdout.fileno(), False)
        self._selector = selectors.DefaultSelector()
        self._selector.register(self._proc.stdout, selectors.EVENT_READ)
        hello = {
            "type": "hello",
            "version": PROTOCOL_VERSION,
            "dt": dt,
            "t_obs": t_obs,
            "t_horizon": horizon,
            "output_kind": self.output_kind.value,
        }
        reply = self._exchange(hello)
        if reply.get("type") != "ready" or reply.get("output_kind") != self.output_kind.value:
            self.close()
            raise ProtocolError(
                f"handshake failed: expected ready/{self.output_kind.value}", json.dumps(reply)
            )

    def _send(self, message: dict) -> str:
        raw = json.dumps(message)
        if self._proc.poll() is not None:
            raise TransportError(f"predictor process exited with {self._proc.returncode}", raw)
        assert self._proc.stdin is not None
        try:
            self._proc.stdin.write(raw.encode() + b"\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise TransportError(f"failed to write request: {exc}", raw) from exc
        return raw

    def _read_line(self, sent: str) -> str:
        deadline = time.monotonic() + self.timeout_ms / 1000.0
        while b"\n" not in self._buffer:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise PredictorTimeout(f"no response within {self.timeout_ms} ms", sent)
            if not self._selector.select(timeout=remaining):
                continue
            assert self._proc.stdout is not None
            chunk = self._proc.stdout.read()
            if chunk:
                self._buffer += chunk
            elif chunk == b"":
                code = self._proc.poll()
                raise TransportError(
                    f"predictor stream closed (exit code {code})", sent
                )
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line.decode("utf-8", errors="replace")

    def _exchange(self, message: dict) -> dict:
        sent = self._send(message)
        raw = self._read_line(sent)
        try:
            reply = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"response is not valid JSON: {exc}", raw) from exc
        if not isinstance(reply, dict):
            raise ProtocolError("response is not a JSON object", raw)
        return reply

    def predict(self, obs: ObservationWindow) -> PredictionOutput:
        request = {
            "type": "predict",
            "target": [[s.x, s.y, s.psi, s.v] for s in obs.target_history.states],
            "neighbors": {
                agent_id: [[s.x, s.y, s.psi, s.v] for s in traj.states]
                for agent_id, traj in sorted(obs.neighbor_histories.items())
            },
            "map": []
            if obs.map is None
            else [[list(pt) for pt in poly.points] for poly in obs.map.polylines],
        }
        reply = self._exchange(request)
        raw = json.dumps(reply)
        if reply.get("type") == "error":
            raise ProtocolError(f"peer reported error: {reply.get('msg')}", raw)
        if reply.get("type") != "prediction":
            raise ProtocolError(f"unexpected message type {reply.get('type')!r}", raw)
        start = obs.current_frame
        if self.output_kind is OutputKind.POSITIONS:
            pairs = _finite_pairs(reply.get("positions"), self.horizon, "positions", raw)
            return PredictionOutput(
                OutputKind.POSITIONS, positions=PlanarTrace(start, obs.dt, tuple(pairs))
            )
        pairs = _finite_pairs(reply.get("controls"), self.horizon, "controls", raw)
        if self.output_kind is OutputKind.BICYCLE_CONTROLS:
            return PredictionOutput(
                OutputKind.BICYCLE_CONTROLS,
                bicycle_controls=tuple(BicycleControl(a, b) for a, b in pairs),
            )
        return PredictionOutput(
            OutputKind.PARTICLE_CONTROLS,
            particle_controls=tuple(ParticleControl(ax, ay) for ax, ay in pairs),
        )

    def close(self) -> None:
        """Send the shutdown message and reap the process."""
        if self._proc.poll() is None:
            try:
                self._send({"type": "bye"})
            except TransportError:
                pass
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()
        self._selector.close()

    def __enter__(self) -> "ExternalPredictorHandle":
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()
