"""Kinematic decoding layers: bicycle-model and point-mass rollouts.

Per-frame control inputs are integrated into feasible trajectories. The
bicycle model is discretized with explicit forward Euler at the simulation
dt; the point-mass ("particle") model uses the exact constant-acceleration
update, since a closed form exists.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import AgentState, PlanarTrace, Trajectory, wrap_angle


@dataclass(frozen=True)
class KinematicBounds:
    """Symmetric caps on control inputs, applied by clamping."""

    a_max: float = 8.0
    beta_max: float = 0.6

    def __post_init__(self) -> None:
        if self.a_max <= 0 or self.beta_max <= 0:
            raise ValueError("control bounds must be positive")


@dataclass(frozen=True)
class BicycleControl:
    """Acceleration and center-of-mass slip angle for one frame."""

    a: float
    beta: float


@dataclass(frozen=True)
class ParticleControl:
    """Cartesian acceleration components for one frame."""

    ax: float
    ay: float


@dataclass(frozen=True)
class ParticleState:
    """Point-mass state: position and velocity components."""

    x: float
    y: float
    vx: float
    vy: float


@dataclass(frozen=True)
class BicycleGeometry:
    """Distances from the vehicle center to the rear and front axles."""

    l_r: float
    l_f: float

    def __post_init__(self) -> None:
        if self.l_r <= 0 or self.l_f <= 0:
            raise ValueError(f"axle distances must be positive, got l_r={self.l_r}, l_f={self.l_f}")

    @property
    def wheelbase(self) -> float:
        return self.l_r + self.l_f

    @classmethod
    def from_length(cls, length: float, lr_ratio: float = 0.5) -> "BicycleGeometry":
        """Split a vehicle length into axle distances by a rear-axle ratio."""
        if length <= 0:
            raise ValueError(f"vehicle length must be positive, got {length}")
        if not 0.0 < lr_ratio < 1.0:
            raise ValueError(f"lr_ratio must lie in (0, 1), got {lr_ratio}")
        return cls(l_r=lr_ratio * length, l_f=(1.0 - lr_ratio) * length)


def clamp(value: float, limit: float) -> float:
    return max(-limit, min(limit, value))


def clamp_bicycle(u: BicycleControl, bounds: KinematicBounds) -> BicycleControl:
    return BicycleControl(clamp(u.a, bounds.a_max), clamp(u.beta, bounds.beta_max))


def clamp_particle(u: ParticleControl, bounds: KinematicBounds) -> ParticleControl:
    return ParticleControl(clamp(u.ax, bounds.a_max), clamp(u.ay, bounds.a_max))


def bicycle_step(
    state: AgentState, u: BicycleControl, geom: BicycleGeometry, dt: float
) -> AgentState:
    """Advance one frame with the forward-Euler bicycle update.

    x' = x + v cos(psi + beta) dt
    y' = y + v sin(psi + beta) dt
    psi' = psi + (v / l_r) sin(beta) dt
    v' = v + a dt
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    heading = state.psi + u.beta
    x = state.x + state.v * math.cos(heading) * dt
    y = state.y + state.v * math.sin(heading) * dt
    psi = state.psi + (state.v / geom.l_r) * math.sin(u.beta) * dt
    v = state.v + u.a * dt
    if not all(map(math.isfinite, (x, y, psi, v))):
        raise ArithmeticError(
            f"bicycle step diverged: state={state}, control={u}, result=({x}, {y}, {psi}, {v})"
        )
    return AgentState(x, y, wrap_angle(psi), v, state.length, state.width)


def bicycle_rollout(
    initial: AgentState,
    controls: Sequence[BicycleControl],
    geom: BicycleGeometry,
    dt: float,
    start_frame: int = 0,
) -> Trajectory:
    """Integrate a control sequence into a trajectory.

    Returns len(controls) + 1 states, the first being ``initial``; all state
    channels (position, heading, speed) are populated at every frame.
    """
    if not controls:
        raise ValueError("rollout requires at least one control input")
    states = [initial]
    for i, u in enumerate(controls):
        try:
            states.append(bicycle_step(states[-1], u, geom, dt))
        except ArithmeticError as exc:
            raise ArithmeticError(f"rollout failed at step {i}: {exc}") from exc
    return Trajectory(start_frame, dt, tuple(states))


def particle_step(state: ParticleState, u: ParticleControl, dt: float) -> ParticleState:
    """Exact constant-acceleration update over one frame."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = state.x + state.vx * dt + 0.5 * u.ax * dt * dt
    y = state.y + state.vy * dt + 0.5 * u.ay * dt * dt
    vx = state.vx + u.ax * dt
    vy = state.vy + u.ay * dt
    if not all(map(math.isfinite, (x, y, vx, vy))):
        raise ArithmeticError(
            f"particle step diverged: state={state}, control={u}, result=({x}, {y}, {vx}, {vy})"
        )
    return ParticleState(x, y, vx, vy)


def particle_rollout(
    initial: AgentState,
    controls: Sequence[ParticleControl],
    dt: float,
    start_frame: int = 0,
) -> Trajectory:
    """Integrate Cartesian accelerations from an agent state.

    The initial velocity vector comes from (v, psi). Each output frame carries
    speed hypot(vx, vy) and a provisional heading atan2(vy, vx); callers that
    need a trustworthy heading derive it from the positions downstream (the
    provisional value is held at the previous heading while the agent is
    exactly stationary).
    """
    if not controls:
        raise ValueError("rollout requires at least one control input")
    particle = ParticleState(
        initial.x, initial.y, initial.v * math.cos(initial.psi), initial.v * math.sin(initial.psi)
    )
    headings = [initial.psi]
    particles = [particle]
    for i, u in enumerate(controls):
        try:
            particle = particle_step(particle, u, dt)
        except ArithmeticError as exc:
            raise ArithmeticError(f"rollout failed at step {i}: {exc}") from exc
        if particle.vx == 0.0 and particle.vy == 0.0:
            headings.append(headings[-1])
        else:
            headings.append(math.atan2(particle.vy, particle.vx))
        particles.append(particle)
    states = tuple(
        AgentState(p.x, p.y, h, math.hypot(p.vx, p.vy), initial.length, initial.width)
        for p, h in zip(particles, headings)
    )
    return Trajectory(start_frame, dt, states)


def beta_from_gamma(gamma: float, geom: BicycleGeometry) -> float:
    """Slip angle of the center of mass for a given front steering angle.

    beta = atan((l_r / (l_r + l_f)) * tan(gamma))
    """
    if not abs(gamma) < math.pi / 2:
        raise ValueError(f"steering angle must satisfy |gamma| < pi/2, got {gamma}")
    return math.atan(geom.l_r / geom.wheelbase * math.tan(gamma))


def gamma_from_beta(beta: float, geom: BicycleGeometry) -> float:
    """Inverse of :func:`beta_from_gamma`."""
    if not abs(beta) < math.pi / 2:
        raise ValueError(f"slip angle must satisfy |beta| < pi/2, got {beta}")
    return math.atan(geom.wheelbase / geom.l_r * math.tan(beta))


def controls_from_states(trajectory: Trajectory, geom: BicycleGeometry) -> list[BicycleControl]:
    """Recover the per-frame bicycle controls between consecutive states.

    Inverts the forward-Euler update: a = dv/dt and beta = asin(dpsi * l_r /
    (v dt)). The asin argument is clipped into [-1, 1], so on data that did
    not come from a bicycle rollout this is a best-effort fit; beta for a
    stationary frame is 0.
    """
    if len(trajectory) < 2:
        raise ValueError("need at least two states to recover controls")
    dt = trajectory.dt
    controls = []
    for prev, nxt in zip(trajectory.states[:-1], trajectory.states[1:]):
        a = (nxt.v - prev.v) / dt
        if prev.v == 0.0:
            beta = 0.0
        else:
            ratio = wrap_angle(nxt.psi - prev.psi) * geom.l_r / (prev.v * dt)
            beta = math.asin(max(-1.0, min(1.0, ratio)))
        controls.append(BicycleControl(a, beta))
    return controls


def fit_bicycle_controls(
    initial: AgentState,
    targets: np.ndarray,
    geom: BicycleGeometry,
    dt: float,
    bounds: KinematicBounds | None = None,
) -> list[BicycleControl]:
    """Fit a bounded control sequence that chases target waypoints.

    Greedy one-step fit: each slip angle points the Euler step at the next
    waypoint, and each acceleration matches the following waypoint spacing.
    Controls are clamped, so the achieved path deviates from infeasible
    targets instead of violating the bounds.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.ndim != 2 or targets.shape[1] != 2 or len(targets) == 0:
        raise ValueError("targets must be a non-empty (n, 2) array")
    bounds = bounds or KinematicBounds()
    state = initial
    controls: list[BicycleControl] = []
    for i in range(len(targets)):
        dx = targets[i, 0] - state.x
        dy = targets[i, 1] - state.y
        if state.v == 0.0 or (dx == 0.0 and dy == 0.0):
            beta = 0.0
        else:
            beta = wrap_angle(math.atan2(dy, dx) - state.psi)
            if state.v < 0.0:
                beta = wrap_angle(beta + math.pi)
        nxt = targets[min(i + 1, len(targets) - 1)]
        spacing = float(np.hypot(nxt[0] - targets[i, 0], nxt[1] - targets[i, 1]))
        v_desired = spacing / dt if i + 1 < len(targets) else abs(state.v)
        if state.v < 0.0:
            v_desired = -v_desired
        u = BicycleControl(
            clamp((v_desired - state.v) / dt, bounds.a_max),
            clamp(beta, bounds.beta_max),
        )
        controls.append(u)
        state = bicycle_step(state, u, geom, dt)
    return controls


def fit_particle_controls(
    initial: AgentState,
    targets: np.ndarray,
    dt: float,
    bounds: KinematicBounds | None = None,
) -> list[ParticleControl]:
    """Fit a bounded acceleration sequence that chases target waypoints.

    Without clamping this inverts the constant-acceleration update exactly,
    reaching every waypoint; with clamping the achieved path is the closest
    bounded rollout under the same greedy one-step rule.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.ndim != 2 or targets.shape[1] != 2 or len(targets) == 0:
        raise ValueError("targets must be a non-empty (n, 2) array")
    bounds = bounds or KinematicBounds()
    state = ParticleState(
        initial.x, initial.y, initial.v * math.cos(initial.psi), initial.v * math.sin(initial.psi)
    )
    controls: list[ParticleControl] = []
    for i in range(len(targets)):
        ax = 2.0 * (targets[i, 0] - state.x - state.vx * dt) / (dt * dt)
        ay = 2.0 * (targets[i, 1] - state.y - state.vy * dt) / (dt * dt)
        u = ParticleControl(clamp(ax, bounds.a_max), clamp(ay, bounds.a_max))
        controls.append(u)
        state = particle_step(state, u, dt)
    return controls


def estimate_geometry(
    history: Trajectory,
    vehicle_length: float,
    policy: str = "fixed-ratio",
    lr_ratio: float = 0.5,
) -> BicycleGeometry:
    """Estimate axle distances from a vehicle's length and observed motion.

    "fixed-ratio" splits the length by ``lr_ratio``. "curvature-fit" solves a
    least-squares fit of l_r against observed heading rates and slip angles
    (course minus heading) from the history, clamped to [0.2, 0.8] of the
    length; it falls back to the fixed ratio when the history is too slow
    (below 0.5 m/s throughout) or shows no usable turning.
    """
    if len(history) < 2:
        raise ValueError("geometry estimation needs at least two frames of history")
    if vehicle_length <= 0:
        raise ValueError(f"vehicle length must be positive, got {vehicle_length}")
    if policy == "fixed-ratio":
        return BicycleGeometry.from_length(vehicle_length, lr_ratio)
    if policy != "curvature-fit":
        raise ValueError(f"unknown geometry policy {policy!r}")

    speeds = history.speeds()
    if np.all(np.abs(speeds) < 0.5):
        return BicycleGeometry.from_length(vehicle_length, lr_ratio)

    dt = history.dt
    # psi_dot * l_r = v * sin(course - psi) per Euler step; least squares in l_r
    num = 0.0
    den = 0.0
    for prev, nxt in zip(history.states[:-1], history.states[1:]):
        if abs(prev.v) < 0.5:
            continue
        course = math.atan2(nxt.y - prev.y, nxt.x - prev.x)
        slip = wrap_angle(course - prev.psi)
        if prev.v < 0.0:
            slip = wrap_angle(slip + math.pi)
        psi_dot = wrap_angle(nxt.psi - prev.psi) / dt
        num += psi_dot * prev.v * math.sin(slip)
        den += psi_dot * psi_dot
    if den < 1e-12:
        # straight driving carries no curvature signal
        return BicycleGeometry.from_length(vehicle_length, lr_ratio)
    l_r = num / den
    l_r = max(0.2 * vehicle_length, min(0.8 * vehicle_length, l_r))
    return BicycleGeometry(l_r=l_r, l_f=vehicle_length - l_r)


def rollout_positions(trajectory: Trajectory) -> PlanarTrace:
    """Predicted positions of a rollout, excluding the initial state."""
    if len(trajectory) < 2:
        raise ValueError("rollout holds no predicted frames")
    return PlanarTrace(
        trajectory.start_frame + 1,
        trajectory.dt,
        tuple((s.x, s.y) for s in trajectory.states[1:]),
    )
