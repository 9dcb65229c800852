"""Realism and stability metrics over simulation results.

Distance metrics (ADE, FDE, miss rate) compare realized motion to ground
truth; collision rate counts runs that hit a replayed neighbor; motion
smoothness is mean absolute jerk of the speed profile; trajectory difference
measures how much consecutive predictions disagree on their overlapping
frames. Aggregation reports population mean and std per setting.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import PlanarTrace, Trajectory
from .engine import Setting, SimResult


def _check_aligned(simulated: Trajectory, truth: Trajectory) -> None:
    if (
        simulated.start_frame != truth.start_frame
        or len(simulated) != len(truth)
        or simulated.dt != truth.dt
    ):
        raise ValueError(
            f"trajectories are misaligned: [{simulated.start_frame}, {simulated.end_frame}) "
            f"dt={simulated.dt} vs [{truth.start_frame}, {truth.end_frame}) dt={truth.dt}"
        )


def ade(
    simulated: Trajectory, truth: Trajectory, bucket: tuple[int, int] | None = None
) -> float:
    """Mean Euclidean distance over a frame bucket (the full range if None).

    ``bucket`` is a half-open [start, stop) offset range into the window.
    """
    _check_aligned(simulated, truth)
    errors = np.hypot(*(simulated.positions() - truth.positions()).T)
    if bucket is not None:
        start, stop = bucket
        if not 0 <= start < stop <= len(errors):
            raise ValueError(f"bucket [{start}, {stop}) outside the {len(errors)}-frame window")
        errors = errors[start:stop]
    return float(errors.mean())


def fde(simulated: Trajectory, truth: Trajectory) -> float:
    """Euclidean distance at the final simulated frame."""
    _check_aligned(simulated, truth)
    a, b = simulated.states[-1], truth.states[-1]
    return math.hypot(a.x - b.x, a.y - b.y)


def collision_rate(results: Sequence[SimResult]) -> float:
    """Percent of results with at least one collision (counted once each)."""
    if not results:
        raise ValueError("collision rate needs at least one result")
    return 100.0 * sum(1 for r in results if r.collided) / len(results)


def motion_smoothness(simulated: Trajectory, vector: bool = False) -> float:
    """Mean absolute jerk of the simulated motion, in m/s^3.

    Default differentiates the scalar speed channel twice (every setting
    produces a comparable speed channel); ``vector=True`` instead uses the
    norm of the second difference of the velocity vector v * (cos psi,
    sin psi).
    """
    if len(simulated) < 4:
        raise ValueError(f"jerk needs at least 4 frames, got {len(simulated)}")
    dt = simulated.dt
    if vector:
        vel = simulated.speeds()[:, None] * np.column_stack(
            [np.cos(simulated.headings()), np.sin(simulated.headings())]
        )
        acc = np.diff(vel, axis=0) / dt
        jerk = np.hypot(*(np.diff(acc, axis=0) / dt).T)
    else:
        acc = np.diff(simulated.speeds()) / dt
        jerk = np.abs(np.diff(acc) / dt)
    return float(jerk.mean())


def trajectory_difference(predictions: Sequence[PlanarTrace], t_update: int) -> float:
    """Mean squared disagreement of consecutive predictions, in m^2.

    Each consecutive pair is compared at the same absolute frames over their
    overlap (horizon minus t_update frames); the result averages over pairs.
    """
    if len(predictions) < 2:
        raise ValueError("trajectory difference needs at least two predictions")
    horizon = len(predictions[0])
    if t_update >= horizon:
        raise ValueError(f"t_update {t_update} leaves no overlap on a {horizon}-frame horizon")
    pair_means = []
    for prev, nxt in zip(predictions[:-1], predictions[1:]):
        if len(prev) != horizon or len(nxt) != horizon:
            raise ValueError("predictions must all share one horizon length")
        if nxt.start_frame - prev.start_frame != t_update:
            raise ValueError(
                f"consecutive predictions offset by {nxt.start_frame - prev.start_frame} "
                f"frames, expected {t_update}"
            )
        overlap = horizon - t_update
        a = prev.xy()[t_update:]
        b = nxt.xy()[:overlap]
        pair_means.append(float(np.sum((a - b) ** 2, axis=1).mean()))
    return float(np.mean(pair_means))


@dataclass(frozen=True)
class MissThresholds:
    """Final-frame displacement thresholds in the ground-truth heading frame.

    ``longitudinal`` is a piecewise-constant table of (speed upper bound,
    threshold) rows, tried in order; speeds beyond the table fall back to
    ``longitudinal_default``.
    """

    lateral: float = 1.0
    longitudinal: tuple[tuple[float, float], ...] = ()
    longitudinal_default: float = 2.0

    def longitudinal_for(self, speed: float) -> float:
        for upper, threshold in self.longitudinal:
            if speed <= upper:
                return threshold
        return self.longitudinal_default


def missed(result: SimResult, thresholds: MissThresholds) -> bool:
    """Whether the final-frame error exceeds either threshold."""
    if result.simulated is None:
        raise ValueError("cannot score a run with no committed frames")
    _check_aligned(result.simulated, result.ground_truth)
    sim_final = result.simulated.states[-1]
    true_final = result.ground_truth.states[-1]
    dx = sim_final.x - true_final.x
    dy = sim_final.y - true_final.y
    lon = dx * math.cos(true_final.psi) + dy * math.sin(true_final.psi)
    lat = -dx * math.sin(true_final.psi) + dy * math.cos(true_final.psi)
    return abs(lat) > thresholds.lateral or abs(lon) > thresholds.longitudinal_for(
        abs(true_final.v)
    )


def miss_rate(results: Sequence[SimResult], thresholds: MissThresholds) -> float:
    """Percent of results whose final-frame error exceeds the thresholds."""
    if not results:
        raise ValueError("miss rate needs at least one result")
    return 100.0 * sum(1 for r in results if missed(r, thresholds)) / len(results)


N_ADE_BUCKETS = 5


def ade_bucket_bounds(n_frames: int, n_buckets: int = N_ADE_BUCKETS) -> list[tuple[int, int]]:
    """Partition a window into equal frame buckets (1-second windows at the
    default 50 frames / 0.1 s)."""
    bounds = [n_frames * i // n_buckets for i in range(n_buckets + 1)]
    return [(bounds[i], bounds[i + 1]) for i in range(n_buckets) if bounds[i] < bounds[i + 1]]


@dataclass(frozen=True)
class MetricStat:
    mean: float
    std: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "MetricStat":
        arr = np.asarray(values, dtype=float)
        return cls(float(arr.mean()), float(arr.std()))


@dataclass
class SettingReport:
    """Aggregated metrics for one framework setting."""

    setting: Setting
    n_runs: int
    n_failed: int
    ade_buckets: list[MetricStat] = field(default_factory=list)
    overall_ade: MetricStat | None = None
    fde: MetricStat | None = None
    cr: MetricStat | None = None
    ms: MetricStat | None = None
    td: MetricStat | None = None
    mr: MetricStat | None = None

    @property
    def n_used(self) -> int:
        return self.n_runs - self.n_failed


@dataclass
class SimReport:
    """Per-setting aggregation over (scenario x seed) runs.

    Std is the population standard deviation. Failed runs contribute to
    ``n_failed`` only.
    """

    settings: dict[Setting, SettingReport] = field(default_factory=dict)
    thresholds: MissThresholds = field(default_factory=MissThresholds)


def aggregate(
    results: Sequence[SimResult], thresholds: MissThresholds | None = None
) -> SimReport:
    """Group results by setting and aggregate every metric family."""
    if not results:
        raise ValueError("aggregation needs at least one result")
    thresholds = thresholds or MissThresholds()
    report = SimReport(thresholds=thresholds)
    by_setting: dict[Setting, list[SimResult]] = {}
    for result in results:
        by_setting.setdefault(result.setting, []).append(result)
    for setting in sorted(by_setting, key=lambda s: s.value):
        group = by_setting[setting]
        used = [r for r in group if not r.failed]
        entry = SettingReport(setting=setting, n_runs=len(group), n_failed=len(group) - len(used))
        if used:
            buckets = ade_bucket_bounds(len(used[0].ground_truth))
            entry.ade_buckets = [
                MetricStat.of([ade(r.simulated, r.ground_truth, b) for r in used])
                for b in buckets
            ]
            entry.overall_ade = MetricStat.of([ade(r.simulated, r.ground_truth) for r in used])
            entry.fde = MetricStat.of([fde(r.simulated, r.ground_truth) for r in used])
            entry.cr = MetricStat.of([100.0 if r.collided else 0.0 for r in used])
            entry.ms = MetricStat.of([motion_smoothness(r.simulated) for r in used])
            td_values = [
                trajectory_difference(r.predictions, _prediction_offset(r))
                for r in used
                if len(r.predictions) >= 2
            ]
            entry.td = MetricStat.of(td_values) if td_values else None
            entry.mr = MetricStat.of([100.0 if missed(r, thresholds) else 0.0 for r in used])
        report.settings[setting] = entry
    return report


def _prediction_offset(result: SimResult) -> int:
    return result.predictions[1].start_frame - result.predictions[0].start_frame


METRIC_ORDER = ("overall_ade", "fde", "cr", "ms", "td", "mr")
METRIC_LABELS = {
    "overall_ade": "Overall ADE (m)",
    "fde": "FDE (m)",
    "cr": "CR (%)",
    "ms": "MS (m/s^3)",
    "td": "TD (m^2)",
    "mr": "MR (%)",
}


def report_rows(report: SimReport) -> list[tuple[str, str, float, float]]:
    """Flatten a report to (setting, metric, mean, std) rows for CSV."""
    rows = []
    for setting in sorted(report.settings, key=lambda s: s.value):
        entry = report.settings[setting]
        for i, stat in enumerate(entry.ade_buckets):
            rows.append((setting.value, f"ade_bucket_{i}", stat.mean, stat.std))
        for name in METRIC_ORDER:
            stat = getattr(entry, name)
            if stat is not None:
                rows.append((setting.value, name, stat.mean, stat.std))
        rows.append((setting.value, "n_runs", float(entry.n_runs), 0.0))
        rows.append((setting.value, "n_failed", float(entry.n_failed), 0.0))
    return rows


def format_table(report: SimReport) -> str:
    """Aligned text table: one row per setting, mean (std) per metric."""
    n_buckets = max(
        (len(e.ade_buckets) for e in report.settings.values()), default=N_ADE_BUCKETS
    )
    headers = ["Setting"]
    headers += [f"ADE {i}-{i + 1}s (m)" for i in range(n_buckets)]
    headers += [METRIC_LABELS[name] for name in METRIC_ORDER]
    headers += ["runs", "failed"]
    lines = [headers]
    for setting in sorted(report.settings, key=lambda s: s.value):
        entry = report.settings[setting]
        row = [setting.value]
        stats = list(entry.ade_buckets) + [getattr(entry, name) for name in METRIC_ORDER]
        for stat in stats:
            row.append("-" if stat is None else f"{stat.mean:.2f} ({stat.std:.2f})")
        row += [str(entry.n_runs), str(entry.n_failed)]
        lines.append(row)
    widths = [max(len(line[i]) for line in lines) for i in range(len(headers))]
    out = ["# cells are mean (population std) over runs"]
    for line in lines:
        out.append("  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip())
    return "\n".join(out) + "\n"
