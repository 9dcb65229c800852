"""Dependency-free SVG rendering of simulation results.

Emits three stacked panels: the x-y trajectory (with any map polylines),
the speed profile, and the heading profile. Simulated motion is drawn over
ground truth, with sample dots every 0.3 simulated seconds.
"""
from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .engine import SimResult
from .ingest import MapData

PANEL_W = 640
PANEL_H = 220
MARGIN = 46
DOT_PERIOD_S = 0.3

GT_STYLE = 'stroke="#888888" stroke-width="1.5" fill="none"'
SIM_STYLE = 'stroke="#1f6fb2" stroke-width="1.5" fill="none"'
MAP_STYLE = 'stroke="#cccccc" stroke-width="1" fill="none"'


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(s * mag for s in (1.0, 2.0, 5.0, 10.0) if s * mag >= raw)
    first = math.ceil(lo / step) * step
    ticks = []
    t = first
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


class _Panel:
    """One coordinate frame with axes, ticks, and data marks."""

    def __init__(self, title: str, y_offset: int, xlim: tuple[float, float],
                 ylim: tuple[float, float], equal_aspect: bool = False) -> None:
        self.title = title
        self.y_offset = y_offset
        pad_x = 0.05 * (xlim[1] - xlim[0] or 1.0)
        pad_y = 0.05 * (ylim[1] - ylim[0] or 1.0)
        self.xlim = (xlim[0] - pad_x, xlim[1] + pad_x)
        self.ylim = (ylim[0] - pad_y, ylim[1] + pad_y)
        if equal_aspect:
            self._equalize()
        self.parts: list[str] = []
        self._axes()

    def _equalize(self) -> None:
        span_x = self.xlim[1] - self.xlim[0]
        span_y = self.ylim[1] - self.ylim[0]
        usable_w = PANEL_W - 2 * MARGIN
        usable_h = PANEL_H - 2 * MARGIN
        scale = max(span_x / usable_w, span_y / usable_h)
        cx = 0.5 * (self.xlim[0] + self.xlim[1])
        cy = 0.5 * (self.ylim[0] + self.ylim[1])
        self.xlim = (cx - 0.5 * scale * usable_w, cx + 0.5 * scale * usable_w)
        self.ylim = (cy - 0.5 * scale * usable_h, cy + 0.5 * scale * usable_h)

    def to_px(self, x: float, y: float) -> tuple[float, float]:
        px = MARGIN + (x - self.xlim[0]) / (self.xlim[1] - self.xlim[0]) * (PANEL_W - 2 * MARGIN)
        py = (
            self.y_offset
            + PANEL_H
            - MARGIN
            - (y - self.ylim[0]) / (self.ylim[1] - self.ylim[0]) * (PANEL_H - 2 * MARGIN)
        )
        return px, py

    def _axes(self) -> None:
        x0, y0 = MARGIN, self.y_offset + PANEL_H - MARGIN
        x1, y1 = PANEL_W - MARGIN, self.y_offset + MARGIN
        self.parts.append(
            f'<text x="{PANEL_W / 2:.1f}" y="{self.y_offset + 18:.1f}" text-anchor="middle" '
            f'font-size="13">{self.title}</text>'
        )
        self.parts.append(
            f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black" stroke-width="1"/>'
        )
        self.parts.append(
            f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black" stroke-width="1"/>'
        )
        for t in _nice_ticks(*self.xlim):
            px, _ = self.to_px(t, self.ylim[0])
            if px < x0 - 0.5 or px > x1 + 0.5:
                continue
            self.parts.append(
                f'<line x1="{px:.1f}" y1="{y0}" x2="{px:.1f}" y2="{y0 + 4}" stroke="black"/>'
            )
            self.parts.append(
                f'<text x="{px:.1f}" y="{y0 + 16}" text-anchor="middle" font-size="10">{t:g}</text>'
            )
        for t in _nice_ticks(*self.ylim):
            _, py = self.to_px(self.xlim[0], t)
            if py > y0 + 0.5 or py < y1 - 0.5:
                continue
            self.parts.append(
                f'<line x1="{x0 - 4}" y1="{py:.1f}" x2="{x0}" y2="{py:.1f}" stroke="black"/>'
            )
            self.parts.append(
                f'<text x="{x0 - 7}" y="{py + 3:.1f}" text-anchor="end" font-size="10">{t:g}</text>'
            )

    def polyline(self, xs, ys, style: str) -> None:
        pts = " ".join(f"{px:.2f},{py:.2f}" for px, py in (self.to_px(x, y) for x, y in zip(xs, ys)))
        self.parts.append(f'<polyline points="{pts}" {style}/>')

    def dots(self, xs, ys, every: int, color: str) -> None:
        for i in range(0, len(xs), every):
            px, py = self.to_px(xs[i], ys[i])
            self.parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.2" fill="{color}"/>')

    def svg(self) -> str:
        return '<g class="panel">\n' + "\n".join(self.parts) + "\n</g>"


def render_result_svg(result: SimResult, map_data: MapData | None = None) -> str:
    """Render trajectory, speed, and heading panels for one run."""
    gt = result.ground_truth
    sim = result.simulated
    dt = gt.dt
    dot_every = max(1, int(round(DOT_PERIOD_S / dt)))

    gt_xy = gt.positions()
    sim_xy = sim.positions() if sim is not None else np.empty((0, 2))
    all_xy = np.vstack([gt_xy, sim_xy]) if len(sim_xy) else gt_xy
    traj = _Panel(
        f"trajectory [{result.scenario_id} / {result.setting.value}]",
        0,
        (float(all_xy[:, 0].min()), float(all_xy[:, 0].max())),
        (float(all_xy[:, 1].min()), float(all_xy[:, 1].max())),
        equal_aspect=True,
    )
    if map_data is not None:
        for poly in map_data.polylines:
            xy = poly.xy()
            traj.polyline(xy[:, 0], xy[:, 1], MAP_STYLE)
    traj.polyline(gt_xy[:, 0], gt_xy[:, 1], GT_STYLE)
    traj.dots(gt_xy[:, 0], gt_xy[:, 1], dot_every, "#888888")
    if len(sim_xy):
        traj.polyline(sim_xy[:, 0], sim_xy[:, 1], SIM_STYLE)
        traj.dots(sim_xy[:, 0], sim_xy[:, 1], dot_every, "#1f6fb2")

    times_gt = (gt.start_frame + np.arange(len(gt))) * dt
    series = [(times_gt, gt.speeds(), gt.headings(), GT_STYLE, "#888888")]
    if sim is not None:
        times_sim = (sim.start_frame + np.arange(len(sim))) * dt
        series.append((times_sim, sim.speeds(), sim.headings(), SIM_STYLE, "#1f6fb2"))

    t_lo = min(float(s[0][0]) for s in series)
    t_hi = max(float(s[0][-1]) for s in series)
    v_all = np.concatenate([s[1] for s in series])
    psi_all = np.concatenate([s[2] for s in series])

    vel = _Panel("speed (m/s)", PANEL_H, (t_lo, t_hi), (float(v_all.min()), float(v_all.max())))
    heading = _Panel(
        "heading (rad)", 2 * PANEL_H, (t_lo, t_hi), (float(psi_all.min()), float(psi_all.max()))
    )
    for times, speeds, headings, style, color in series:
        vel.polyline(times, speeds, style)
        vel.dots(times, speeds, dot_every, color)
        heading.polyline(times, headings, style)
        heading.dots(times, headings, dot_every, color)

    body = "\n".join(p.svg() for p in (traj, vel, heading))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{PANEL_W}" '
        f'height="{3 * PANEL_H}" viewBox="0 0 {PANEL_W} {3 * PANEL_H}">\n'
        f'<rect width="{PANEL_W}" height="{3 * PANEL_H}" fill="white"/>\n{body}\n</svg>\n'
    )


def write_result_svg(result: SimResult, path: str | Path, map_data: MapData | None = None) -> None:
    Path(path).write_text(render_result_svg(result, map_data))
