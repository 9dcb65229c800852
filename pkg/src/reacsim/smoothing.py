"""Weighted-average smoothing of successive predicted traces.

Each new prediction is blended with the previous blended trace on their
overlapping frames: out = (1 - alpha) * predicted + alpha * previous. Frames
the previous trace does not cover (the fresh tail of the horizon) pass
through unblended.
"""
from __future__ import annotations

from dataclasses import dataclass

from .core import PlanarTrace


@dataclass(frozen=True)
class SmootherState:
    """Blend weight plus the previously emitted trace, if any."""

    alpha: float
    last_weighted: PlanarTrace | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {self.alpha}")


def smooth_update(
    state: SmootherState, predicted: PlanarTrace
) -> tuple[SmootherState, PlanarTrace]:
    """Blend a new prediction against the stored trace.

    The first call passes the prediction through unchanged. Later calls
    require the stored trace to start no later than the prediction and to
    share its frame grid (same dt).

    Returns:
        The updated smoother state and the blended trace, which covers
        exactly the predicted frames.
    """
    last = state.last_weighted
    if last is None:
        return SmootherState(state.alpha, predicted), predicted
    if last.dt != predicted.dt:
        raise ValueError(f"frame grids disagree: stored dt={last.dt}, predicted dt={predicted.dt}")
    if last.start_frame > predicted.start_frame:
        raise ValueError(
            f"stored trace starts at frame {last.start_frame}, "
            f"after the prediction at {predicted.start_frame}"
        )
    out = predicted.xy()
    overlap_stop = min(last.end_frame, predicted.end_frame)
    n_overlap = overlap_stop - predicted.start_frame
    if n_overlap > 0:
        offset = predicted.start_frame - last.start_frame
        prev = last.xy()[offset : offset + n_overlap]
        # (1 - alpha) * predicted + alpha * prev, written so that agreeing
        # points stay bitwise fixed
        out[:n_overlap] += state.alpha * (prev - out[:n_overlap])
    blended = PlanarTrace.from_xy(predicted.start_frame, predicted.dt, out)
    return SmootherState(state.alpha, blended), blended
