import numpy as np
import pytest

from reacsim.core import AgentState, OrientedBox


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def sample_box(rng, span=6.0):
    return OrientedBox(
        center_x=float(rng.uniform(-span, span)),
        center_y=float(rng.uniform(-span, span)),
        heading=float(rng.uniform(-np.pi, np.pi)),
        length=float(rng.uniform(1.0, 5.0)),
        width=float(rng.uniform(0.5, 3.0)),
    )


def grid_overlap_oracle(a: OrientedBox, b: OrientedBox, n: int = 200) -> bool:
    """Dense sampling oracle: any grid point inside a contained in b?

    Independent of the separating-axis test; resolution is bounded by the
    grid spacing, so slivers thinner than ~2 cells can be missed.
    """
    u = np.linspace(-0.5, 0.5, n)
    gx, gy = np.meshgrid(u * a.length, u * a.width)
    ca, sa = np.cos(a.heading), np.sin(a.heading)
    wx = a.center_x + ca * gx - sa * gy
    wy = a.center_y + sa * gx + ca * gy
    cb, sb = np.cos(b.heading), np.sin(b.heading)
    dx = wx - b.center_x
    dy = wy - b.center_y
    local_x = cb * dx + sb * dy
    local_y = -sb * dx + cb * dy
    inside = (np.abs(local_x) <= 0.5 * b.length) & (np.abs(local_y) <= 0.5 * b.width)
    return bool(inside.any())


def make_state(x=0.0, y=0.0, psi=0.0, v=10.0, length=4.0, width=1.8) -> AgentState:
    return AgentState(x, y, psi, v, length, width)
