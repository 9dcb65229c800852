"""Shared domain types and oriented-box geometry.

Conventions used throughout the package:
  - headings are radians, counter-clockwise positive, 0 along +x,
    always wrapped to (-pi, pi]
  - speed is a signed scalar along the heading (reverse driving is v < 0)
  - frames are integer indices on a fixed-dt grid (default 0.1 s)
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator, Mapping

import numpy as np

if TYPE_CHECKING:
    from .ingest import MapData

TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi].

    Raises:
        ValueError: if theta is NaN or infinite.
    """
    if not math.isfinite(theta):
        raise ValueError(f"cannot wrap non-finite angle {theta!r}")
    wrapped = math.fmod(theta, TWO_PI)
    if wrapped <= -math.pi:
        wrapped += TWO_PI
    elif wrapped > math.pi:
        wrapped -= TWO_PI
    return wrapped


def _require_finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class AgentState:
    """One agent's pose, speed, and footprint at a single frame.

    The heading is normalized to (-pi, pi] at construction time, so two
    states describing the same pose compare equal regardless of how the
    input angle was expressed.
    """

    x: float
    y: float
    psi: float
    v: float
    length: float
    width: float

    def __post_init__(self) -> None:
        for name in ("x", "y", "psi", "v", "length", "width"):
            _require_finite(name, getattr(self, name))
        if self.length <= 0 or self.width <= 0:
            raise ValueError(
                f"vehicle footprint must be positive, got length={self.length}, width={self.width}"
            )
        object.__setattr__(self, "psi", wrap_angle(self.psi))

    @property
    def position(self) -> tuple[float, float]:
        return (self.x, self.y)

    def box(self) -> "OrientedBox":
        """Footprint of this state as an oriented box."""
        return OrientedBox(self.x, self.y, self.psi, self.length, self.width)


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed sequence of agent states on a fixed-dt frame grid."""

    start_frame: int
    dt: float
    states: tuple[AgentState, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "states", tuple(self.states))
        if not self.states:
            raise ValueError("trajectory must contain at least one state")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self) -> Iterator[AgentState]:
        return iter(self.states)

    @property
    def end_frame(self) -> int:
        """One past the last frame held by this trajectory."""
        return self.start_frame + len(self.states)

    def covers(self, start: int, stop: int) -> bool:
        """True if every frame in [start, stop) is present."""
        return self.start_frame <= start and stop <= self.end_frame

    def state_at(self, frame: int) -> AgentState:
        if not self.start_frame <= frame < self.end_frame:
            raise KeyError(f"frame {frame} outside [{self.start_frame}, {self.end_frame})")
        return self.states[frame - self.start_frame]

    def window(self, start: int, stop: int) -> "Trajectory":
        """Sub-trajectory over frames [start, stop)."""
        if not self.covers(start, stop) or stop <= start:
            raise KeyError(
                f"window [{start}, {stop}) not covered by [{self.start_frame}, {self.end_frame})"
            )
        lo = start - self.start_frame
        return Trajectory(start, self.dt, self.states[lo : lo + (stop - start)])

    def positions(self) -> np.ndarray:
        """Positions as an (n, 2) array."""
        return np.array([(s.x, s.y) for s in self.states], dtype=float)

    def speeds(self) -> np.ndarray:
        return np.array([s.v for s in self.states], dtype=float)

    def headings(self) -> np.ndarray:
        return np.array([s.psi for s in self.states], dtype=float)

    def trace(self) -> "PlanarTrace":
        """Position-only view of this trajectory."""
        return PlanarTrace(self.start_frame, self.dt, tuple((s.x, s.y) for s in self.states))


@dataclass(frozen=True)
class PlanarTrace:
    """Position-only trajectory on the same frame grid as Trajectory."""

    start_frame: int
    dt: float
    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple((float(x), float(y)) for x, y in self.points))
        if not self.points:
            raise ValueError("trace must contain at least one point")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        for x, y in self.points:
            _require_finite("x", x)
            _require_finite("y", y)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def end_frame(self) -> int:
        return self.start_frame + len(self.points)

    def xy(self) -> np.ndarray:
        """Points as an (n, 2) array."""
        return np.array(self.points, dtype=float)

    @classmethod
    def from_xy(cls, start_frame: int, dt: float, xy: np.ndarray) -> "PlanarTrace":
        return cls(start_frame, dt, tuple((float(p[0]), float(p[1])) for p in np.asarray(xy)))


@dataclass(frozen=True)
class OrientedBox:
    """Axis-agnostic rectangle: center, heading, and side lengths."""

    center_x: float
    center_y: float
    heading: float
    length: float
    width: float

    def __post_init__(self) -> None:
        if self.length <= 0 or self.width <= 0:
            raise ValueError(
                f"box sides must be positive, got length={self.length}, width={self.width}"
            )

    def corners(self) -> np.ndarray:
        """The 4 corners as a (4, 2) array, counter-clockwise."""
        c, s = math.cos(self.heading), math.sin(self.heading)
        hl, hw = 0.5 * self.length, 0.5 * self.width
        local = np.array([(hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)])
        rot = np.array([(c, -s), (s, c)])
        return local @ rot.T + np.array([self.center_x, self.center_y])


def _box_axes(box: OrientedBox) -> np.ndarray:
    c, s = math.cos(box.heading), math.sin(box.heading)
    return np.array([(c, s), (-s, c)])


def box_overlap(a: OrientedBox, b: OrientedBox) -> bool:
    """Separating-axis intersection test for two oriented rectangles.

    Closed-set semantics: boxes that merely touch count as overlapping.
    Only the 4 edge normals need checking for a rectangle pair.
    """
    margin = overlap_margin(a, b)
    return margin <= 0.0


def overlap_margin(a: OrientedBox, b: OrientedBox) -> float:
    """Signed separation estimate from the separating-axis projections.

    Positive: boxes are disjoint and their true distance is at least the
    returned gap. Negative: boxes overlap and every axis shows at least
    -margin of projection overlap (a penetration-depth lower bound).
    Zero: touching.
    """
    corners_a = a.corners()
    corners_b = b.corners()
    axes = np.vstack([_box_axes(a), _box_axes(b)])
    proj_a = corners_a @ axes.T
    proj_b = corners_b @ axes.T
    # gap > 0 on any axis separates; otherwise the least-overlapped axis
    # bounds the penetration depth
    gaps = np.maximum(
        proj_b.min(axis=0) - proj_a.max(axis=0),
        proj_a.min(axis=0) - proj_b.max(axis=0),
    )
    return float(gaps.max())


@dataclass(frozen=True)
class Scenario:
    """Map, logged agent trajectories, and the one agent to simulate.

    All trajectories are ground-truth logs; the simulated agent's log doubles
    as the ground truth its simulation is scored against.
    """

    id: str
    agents: Mapping[str, Trajectory]
    simulated_agent: str
    t0: int
    map: "MapData | None" = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "agents", dict(self.agents))
        if self.simulated_agent not in self.agents:
            raise ValueError(f"simulated agent {self.simulated_agent!r} has no logged trajectory")

    @property
    def target_log(self) -> Trajectory:
        return self.agents[self.simulated_agent]

    def others(self) -> Mapping[str, Trajectory]:
        return {k: v for k, v in self.agents.items() if k != self.simulated_agent}

    def covers(self, t_obs: int, t_sim: int) -> bool:
        """True if the simulated agent's log spans observation and rollout."""
        return self.target_log.covers(self.t0 - t_obs, self.t0 + t_sim)
