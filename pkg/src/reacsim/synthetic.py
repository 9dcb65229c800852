"""Synthetic scenario generators for tests, benchmarks, and demos.

Logs are generated analytically (straight lines, circular arcs, linear
speed ramps), long enough that an oracle predictor never runs out of
future, and convertible back to track CSV rows to exercise ingestion.
"""
from __future__ import annotations

import math

import numpy as np

from .core import AgentState, Scenario, Trajectory
from .ingest import MapData, Polyline, TrackRecord

DEFAULT_DT = 0.1
DEFAULT_T_OBS = 10
DEFAULT_T_SIM = 50
DEFAULT_MARGIN = 30  # spare frames past the window so horizons stay in-log

CAR_LENGTH = 4.0
CAR_WIDTH = 1.8


def _frames(t_obs: int, t_sim: int, margin: int) -> int:
    return t_obs + t_sim + margin


def straight_trajectory(
    n_frames: int,
    speed: float = 10.0,
    heading: float = 0.0,
    origin: tuple[float, float] = (0.0, 0.0),
    dt: float = DEFAULT_DT,
    start_frame: int = 0,
    length: float = CAR_LENGTH,
    width: float = CAR_WIDTH,
) -> Trajectory:
    """Constant-velocity motion along a fixed heading."""
    step_x = speed * math.cos(heading) * dt
    step_y = speed * math.sin(heading) * dt
    states = tuple(
        AgentState(origin[0] + i * step_x, origin[1] + i * step_y, heading, speed, length, width)
        for i in range(n_frames)
    )
    return Trajectory(start_frame, dt, states)


def arc_trajectory(
    n_frames: int,
    speed: float = 8.0,
    radius: float = 30.0,
    heading: float = 0.0,
    origin: tuple[float, float] = (0.0, 0.0),
    dt: float = DEFAULT_DT,
    start_frame: int = 0,
) -> Trajectory:
    """Constant-speed circular motion; positive radius turns left."""
    omega = speed / radius
    cx = origin[0] - radius * math.sin(heading)
    cy = origin[1] + radius * math.cos(heading)
    states = []
    for i in range(n_frames):
        psi = heading + omega * i * dt
        x = cx + radius * math.sin(psi)
        y = cy - radius * math.cos(psi)
        states.append(AgentState(x, y, psi, speed, CAR_LENGTH, CAR_WIDTH))
    return Trajectory(start_frame, dt, tuple(states))


def ramp_trajectory(
    n_frames: int,
    v0: float = 10.0,
    accel: float = -1.0,
    heading: float = 0.0,
    origin: tuple[float, float] = (0.0, 0.0),
    dt: float = DEFAULT_DT,
    start_frame: int = 0,
) -> Trajectory:
    """Straight motion with a linear speed ramp (clamped at standstill)."""
    states = []
    x, y = origin
    v = v0
    for _ in range(n_frames):
        states.append(AgentState(x, y, heading, v, CAR_LENGTH, CAR_WIDTH))
        x += v * math.cos(heading) * dt
        y += v * math.sin(heading) * dt
        v = max(0.0, v + accel * dt)
    return Trajectory(start_frame, dt, tuple(states))


def straight_scenario(
    scenario_id: str = "straight",
    speed: float = 10.0,
    heading: float = 0.0,
    origin: tuple[float, float] = (0.0, 0.0),
    t_obs: int = DEFAULT_T_OBS,
    t_sim: int = DEFAULT_T_SIM,
    margin: int = DEFAULT_MARGIN,
    dt: float = DEFAULT_DT,
) -> Scenario:
    traj = straight_trajectory(_frames(t_obs, t_sim, margin), speed, heading, origin, dt)
    return Scenario(scenario_id, {"ego": traj}, "ego", t0=t_obs)


def arc_scenario(
    scenario_id: str = "arc",
    speed: float = 8.0,
    radius: float = 30.0,
    t_obs: int = DEFAULT_T_OBS,
    t_sim: int = DEFAULT_T_SIM,
    margin: int = DEFAULT_MARGIN,
    dt: float = DEFAULT_DT,
) -> Scenario:
    traj = arc_trajectory(_frames(t_obs, t_sim, margin), speed, radius, dt=dt)
    return Scenario(scenario_id, {"ego": traj}, "ego", t0=t_obs)


def crossing_scenario(
    scenario_id: str = "crossing",
    ego_speed: float = 10.0,
    other_speed: float = 10.0,
    meet_frame: int = 30,
    t_obs: int = DEFAULT_T_OBS,
    t_sim: int = DEFAULT_T_SIM,
    margin: int = DEFAULT_MARGIN,
    dt: float = DEFAULT_DT,
) -> Scenario:
    """Ego drives +x; another agent crosses its path at ``meet_frame``."""
    n = _frames(t_obs, t_sim, margin)
    ego = straight_trajectory(n, ego_speed, 0.0, (0.0, 0.0), dt)
    meet_x = ego.states[meet_frame].x
    other_origin = (meet_x, -other_speed * meet_frame * dt)
    other = straight_trajectory(n, other_speed, math.pi / 2, other_origin, dt)
    return Scenario(scenario_id, {"ego": ego, "crossing": other}, "ego", t0=t_obs)


def straight_road_map(
    length: float = 200.0, y: float = 0.0, lane_id: str = "lane0"
) -> MapData:
    return MapData(
        (Polyline(lane_id, "centerline", ((-20.0, y), (length, y))),)
    )


def benchmark_scenarios(
    n: int,
    seed: int = 0,
    t_obs: int = DEFAULT_T_OBS,
    t_sim: int = DEFAULT_T_SIM,
    margin: int = DEFAULT_MARGIN,
    dt: float = DEFAULT_DT,
) -> list[Scenario]:
    """A seeded mix of straight, arcing, and decelerating scenarios."""
    rng = np.random.default_rng(seed)
    n_frames = _frames(t_obs, t_sim, margin)
    scenarios = []
    for i in range(n):
        kind = i % 3
        speed = float(rng.uniform(4.0, 12.0))
        heading = float(rng.uniform(-math.pi, math.pi))
        origin = (float(rng.uniform(-40.0, 40.0)), float(rng.uniform(-40.0, 40.0)))
        if kind == 0:
            traj = straight_trajectory(n_frames, speed, heading, origin, dt)
        elif kind == 1:
            radius = float(rng.uniform(20.0, 80.0)) * (1.0 if rng.random() < 0.5 else -1.0)
            traj = arc_trajectory(n_frames, speed, radius, heading, origin, dt)
        else:
            accel = float(rng.uniform(-1.5, 1.5))
            traj = ramp_trajectory(n_frames, speed, accel, heading, origin, dt)
        scenarios.append(Scenario(f"bench_{i:03d}", {"ego": traj}, "ego", t0=t_obs))
    return scenarios


def tracks_from_scenario(scenario: Scenario, timestamp0_ms: int = 0) -> list[TrackRecord]:
    """Flatten a scenario back into track CSV rows (for ingest round-trips)."""
    records = []
    for track_id, traj in sorted(scenario.agents.items()):
        for i, s in enumerate(traj.states):
            frame = traj.start_frame + i
            records.append(
                TrackRecord(
                    case_id=scenario.id,
                    track_id=track_id,
                    frame_id=frame,
                    timestamp_ms=timestamp0_ms + int(round(frame * traj.dt * 1000)),
                    agent_type="car",
                    x=s.x,
                    y=s.y,
                    vx=s.v * math.cos(s.psi),
                    vy=s.v * math.sin(s.psi),
                    psi_rad=s.psi,
                    length=s.length,
                    width=s.width,
                )
            )
    return records
