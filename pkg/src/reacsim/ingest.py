"""Track CSV and polyline map parsing, scenario construction, persistence.

Track files are comma-separated with the fixed header
case_id,track_id,frame_id,timestamp_ms,agent_type,x,y,vx,vy,psi_rad,length,width.
Map files are line-oriented: a block starts with "polyline <id> <kind>"
followed by "<x> <y>" lines and ends at a blank line.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import AgentState, Scenario, Trajectory

TRACK_COLUMNS = (
    "case_id",
    "track_id",
    "frame_id",
    "timestamp_ms",
    "agent_type",
    "x",
    "y",
    "vx",
    "vy",
    "psi_rad",
    "length",
    "width",
)

MAP_KINDS = ("centerline", "boundary")


class IngestError(ValueError):
    """Raised for malformed track or map input."""


class SchemaError(IngestError):
    """Track file header does not match the expected columns."""


class RowError(IngestError):
    """A data row could not be parsed; carries the 1-based line number."""

    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass(frozen=True)
class TrackRecord:
    """One row of a track file."""

    case_id: str
    track_id: str
    frame_id: int
    timestamp_ms: int
    agent_type: str
    x: float
    y: float
    vx: float
    vy: float
    psi_rad: float
    length: float
    width: float

    def to_state(self) -> AgentState:
        """Agent state with speed hypot(vx, vy); heading from psi_rad."""
        return AgentState(
            self.x, self.y, self.psi_rad, math.hypot(self.vx, self.vy), self.length, self.width
        )


@dataclass(frozen=True)
class Polyline:
    id: str
    kind: str
    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple((float(x), float(y)) for x, y in self.points))
        if len(self.points) < 2:
            raise ValueError(f"polyline {self.id!r} needs at least 2 points")
        if self.kind not in MAP_KINDS:
            raise ValueError(f"polyline kind must be one of {MAP_KINDS}, got {self.kind!r}")
        for x, y in self.points:
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError(f"polyline {self.id!r} has non-finite coordinates")

    def xy(self) -> np.ndarray:
        return np.array(self.points, dtype=float)

    def arc_lengths(self) -> np.ndarray:
        """Cumulative arc length at each vertex, starting at 0."""
        xy = self.xy()
        seg = np.hypot(*np.diff(xy, axis=0).T)
        return np.concatenate([[0.0], np.cumsum(seg)])

    def project(self, point: tuple[float, float]) -> tuple[float, float]:
        """Nearest point on the polyline as (arc length, distance)."""
        xy = self.xy()
        p = np.asarray(point, dtype=float)
        arcs = self.arc_lengths()
        best = (0.0, float("inf"))
        for i in range(len(xy) - 1):
            a, b = xy[i], xy[i + 1]
            ab = b - a
            denom = float(ab @ ab)
            t = 0.0 if denom == 0.0 else float(np.clip((p - a) @ ab / denom, 0.0, 1.0))
            closest = a + t * ab
            dist = float(np.hypot(*(p - closest)))
            if dist < best[1]:
                best = (float(arcs[i] + t * np.hypot(*ab)), dist)
        return best

    def point_at(self, arc: float) -> tuple[float, float]:
        """Point at a given arc length, clamped to the polyline's extent."""
        arcs = self.arc_lengths()
        arc = float(np.clip(arc, 0.0, arcs[-1]))
        i = int(np.clip(np.searchsorted(arcs, arc, side="right") - 1, 0, len(arcs) - 2))
        seg_len = arcs[i + 1] - arcs[i]
        t = 0.0 if seg_len == 0.0 else (arc - arcs[i]) / seg_len
        xy = self.xy()
        p = xy[i] + t * (xy[i + 1] - xy[i])
        return (float(p[0]), float(p[1]))


@dataclass(frozen=True)
class MapData:
    polylines: tuple[Polyline, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "polylines", tuple(self.polylines))

    def centerlines(self) -> tuple[Polyline, ...]:
        return tuple(p for p in self.polylines if p.kind == "centerline")


def parse_tracks(path: str | Path) -> list[TrackRecord]:
    """Parse a track CSV into records, preserving row order.

    Raises:
        SchemaError: wrong or missing header columns.
        RowError: a cell fails to parse, with its line number.
        IngestError: empty file or no data rows.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        for col in TRACK_COLUMNS:
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        if tuple(header) != TRACK_COLUMNS:
            raise SchemaError(f"{path}: header must be exactly {','.join(TRACK_COLUMNS)}")
        records = []
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(TRACK_COLUMNS):
                raise RowError(line_no, f"expected {len(TRACK_COLUMNS)} cells, got {len(row)}")
            cells = dict(zip(TRACK_COLUMNS, row))
            try:
                records.append(
                    TrackRecord(
                        case_id=cells["case_id"],
                        track_id=cells["track_id"],
                        frame_id=int(cells["frame_id"]),
                        timestamp_ms=int(cells["timestamp_ms"]),
                        agent_type=cells["agent_type"],
                        x=float(cells["x"]),
                        y=float(cells["y"]),
                        vx=float(cells["vx"]),
                        vy=float(cells["vy"]),
                        psi_rad=float(cells["psi_rad"]),
                        length=float(cells["length"]),
                        width=float(cells["width"]),
                    )
                )
            except ValueError as exc:
                raise RowError(line_no, str(exc)) from None
    if not records:
        raise IngestError(f"{path}: no data rows")
    return records


def serialize_tracks(records: Iterable[TrackRecord], path: str | Path) -> None:
    """Write records back to the track CSV format (parse round-trips exactly)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACK_COLUMNS)
        for r in records:
            writer.writerow(
                [
                    r.case_id,
                    r.track_id,
                    r.frame_id,
                    r.timestamp_ms,
                    r.agent_type,
                    repr(r.x),
                    repr(r.y),
                    repr(r.vx),
                    repr(r.vy),
                    repr(r.psi_rad),
                    repr(r.length),
                    repr(r.width),
                ]
            )


def _contiguous_segments(records: list[TrackRecord], dt: float) -> list[Trajectory]:
    """Split one agent's rows into trajectories over consecutive frame ids."""
    ordered = sorted(records, key=lambda r: r.frame_id)
    segments: list[Trajectory] = []
    run: list[TrackRecord] = []
    for rec in ordered:
        if run and rec.frame_id != run[-1].frame_id + 1:
            segments.append(Trajectory(run[0].frame_id, dt, tuple(r.to_state() for r in run)))
            run = []
        run.append(rec)
    if run:
        segments.append(Trajectory(run[0].frame_id, dt, tuple(r.to_state() for r in run)))
    return segments


@dataclass
class ScenarioBuild:
    """Scenarios plus a record of (case, agent) pairs that were skipped."""

    scenarios: list[Scenario] = field(default_factory=list)
    skipped: list[tuple[str, str, str]] = field(default_factory=list)


def build_scenarios(
    records: Sequence[TrackRecord],
    t_obs: int,
    t_sim: int,
    min_track_len: int | None = None,
    dt: float = 0.1,
    map_data: MapData | None = None,
) -> ScenarioBuild:
    """Build one scenario per (case, agent) with enough contiguous coverage.

    An agent qualifies if some contiguous segment of its log holds at least
    t_obs + t_sim frames (or ``min_track_len`` if that is larger); the first
    such segment is used and simulation starts t_obs frames into it. All other
    agents of the case are attached for replay with whichever of their
    segments overlaps the simulation window most.
    """
    if t_obs <= 0 or t_sim <= 0:
        raise ValueError("t_obs and t_sim must be positive")
    need = max(t_obs + t_sim, min_track_len or 0)

    by_case: dict[str, dict[str, list[TrackRecord]]] = {}
    for rec in records:
        by_case.setdefault(rec.case_id, {}).setdefault(rec.track_id, []).append(rec)

    build = ScenarioBuild()
    for case_id in sorted(by_case):
        tracks = by_case[case_id]
        segments = {
            track_id: _contiguous_segments(recs, dt) for track_id, recs in sorted(tracks.items())
        }
        for track_id in sorted(tracks):
            eligible = [seg for seg in segments[track_id] if len(seg) >= need]
            if not eligible:
                longest = max(len(seg) for seg in segments[track_id])
                build.skipped.append(
                    (case_id, track_id, f"longest contiguous segment {longest} < {need} frames")
                )
                continue
            target = eligible[0]
            t0 = target.start_frame + t_obs
            window = (t0 - t_obs, t0 + t_sim)
            agents: dict[str, Trajectory] = {track_id: target}
            for other_id, other_segments in segments.items():
                if other_id == track_id:
                    continue
                best = max(
                    other_segments,
                    key=lambda seg: min(seg.end_frame, window[1]) - max(seg.start_frame, window[0]),
                )
                overlap = min(best.end_frame, window[1]) - max(best.start_frame, window[0])
                if overlap > 0:
                    agents[other_id] = best
            build.scenarios.append(
                Scenario(
                    id=f"{case_id}_{track_id}",
                    agents=agents,
                    simulated_agent=track_id,
                    t0=t0,
                    map=map_data,
                )
            )
    return build


def parse_map(path: str | Path) -> MapData:
    """Parse the polyline map format.

    An empty file is a valid empty map. Malformed lines raise IngestError
    with their line number.
    """
    path = Path(path)
    polylines: list[Polyline] = []
    current: tuple[str, str] | None = None
    points: list[tuple[float, float]] = []

    def finish(line_no: int) -> None:
        nonlocal current, points
        if current is None:
            return
        pid, kind = current
        try:
            polylines.append(Polyline(pid, kind, tuple(points)))
        except ValueError as exc:
            raise RowError(line_no, str(exc)) from None
        current, points = None, []

    with path.open() as fh:
        line_no = 0
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                finish(line_no)
                continue
            fields = line.split()
            if fields[0] == "polyline":
                if current is not None:
                    finish(line_no)
                if len(fields) != 3:
                    raise RowError(line_no, "expected 'polyline <id> <kind>'")
                current = (fields[1], fields[2])
            else:
                if current is None:
                    raise RowError(line_no, f"point outside polyline block: {line!r}")
                if len(fields) != 2:
                    raise RowError(line_no, f"expected '<x> <y>', got {line!r}")
                try:
                    points.append((float(fields[0]), float(fields[1])))
                except ValueError:
                    raise RowError(line_no, f"unparseable coordinates {line!r}") from None
        finish(line_no + 1)
    return MapData(tuple(polylines))


def write_map(map_data: MapData, path: str | Path) -> None:
    """Write a map in the same polyline format parse_map reads."""
    lines = []
    for poly in map_data.polylines:
        lines.append(f"polyline {poly.id} {poly.kind}")
        lines.extend(f"{repr(x)} {repr(y)}" for x, y in poly.points)
        lines.append("")
    Path(path).write_text("\n".join(lines))


def scenario_to_dict(scenario: Scenario) -> dict:
    return {
        "id": scenario.id,
        "simulated_agent": scenario.simulated_agent,
        "t0": scenario.t0,
        "agents": {
            agent_id: {
                "start_frame": traj.start_frame,
                "dt": traj.dt,
                "states": [[s.x, s.y, s.psi, s.v, s.length, s.width] for s in traj.states],
            }
            for agent_id, traj in sorted(scenario.agents.items())
        },
        "map": None
        if scenario.map is None
        else {
            "polylines": [
                {"id": p.id, "kind": p.kind, "points": [list(pt) for pt in p.points]}
                for p in scenario.map.polylines
            ]
        },
    }


def scenario_from_dict(data: dict) -> Scenario:
    agents = {
        agent_id: Trajectory(
            int(spec["start_frame"]),
            float(spec["dt"]),
            tuple(AgentState(*row) for row in spec["states"]),
        )
        for agent_id, spec in data["agents"].items()
    }
    map_data = None
    if data.get("map") is not None:
        map_data = MapData(
            tuple(
                Polyline(p["id"], p["kind"], tuple((x, y) for x, y in p["points"]))
                for p in data["map"]["polylines"]
            )
        )
    return Scenario(
        id=data["id"],
        agents=agents,
        simulated_agent=data["simulated_agent"],
        t0=int(data["t0"]),
        map=map_data,
    )


def save_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario)))


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_dict(json.loads(Path(path).read_text()))
