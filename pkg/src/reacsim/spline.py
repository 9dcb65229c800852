"""Natural cubic spline fits of planar traces and state derivation.

Positions are interpolated exactly by independent C2 splines x(t), y(t) with
natural boundary conditions; speed and heading profiles come from the spline
derivatives. atan2 of near-zero derivatives is noise, so below a small speed
threshold the heading holds the last confident value instead.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .core import AgentState, PlanarTrace, Trajectory

DEFAULT_V_EPS = 0.1


@dataclass(frozen=True)
class SplinePair:
    """Independent natural cubic splines x(t), y(t) over t = frame * dt."""

    x: CubicSpline
    y: CubicSpline
    start_frame: int
    dt: float

    def position(self, t: float) -> tuple[float, float]:
        return float(self.x(t)), float(self.y(t))

    def velocity(self, t: float) -> tuple[float, float]:
        return float(self.x(t, 1)), float(self.y(t, 1))


def fit_spline(trace: PlanarTrace) -> SplinePair:
    """Fit natural cubic splines through all points of a trace.

    Raises:
        ValueError: if the trace has fewer than 3 points.
    """
    if len(trace) < 3:
        raise ValueError(f"spline fit needs at least 3 points, got {len(trace)}")
    t = (trace.start_frame + np.arange(len(trace))) * trace.dt
    xy = trace.xy()
    return SplinePair(
        x=CubicSpline(t, xy[:, 0], bc_type="natural"),
        y=CubicSpline(t, xy[:, 1], bc_type="natural"),
        start_frame=trace.start_frame,
        dt=trace.dt,
    )


def derive_profile(
    trace: PlanarTrace,
    template: AgentState,
    v_eps: float = DEFAULT_V_EPS,
) -> Trajectory:
    """Derive full agent states (speed, heading) from a positional trace.

    At each knot: v = |spline derivative| and psi = atan2 of the derivative,
    except that frames slower than ``v_eps`` keep the last confident heading
    (the template's heading before any confident frame is seen). Footprint
    dimensions are copied from the template.
    """
    pair = fit_spline(trace)
    t = (trace.start_frame + np.arange(len(trace))) * trace.dt
    dx = pair.x(t, 1)
    dy = pair.y(t, 1)
    speeds = np.hypot(dx, dy)
    states = []
    heading = template.psi
    for (x, y), vx, vy, v in zip(trace.points, dx, dy, speeds):
        if v >= v_eps:
            heading = math.atan2(vy, vx)
        states.append(AgentState(x, y, heading, float(v), template.length, template.width))
    return Trajectory(trace.start_frame, trace.dt, tuple(states))
