"""Line-delimited persistence of simulation results.

One JSONL file per run: a meta record, then one record per ground-truth
frame, committed frame, prediction, and collision. Streaming-friendly and
recoverable after partial failures; floats round-trip bitwise through JSON.
"""
from __future__ import annotations

import json
from pathlib import Path

from .core import AgentState, PlanarTrace, Trajectory
from .engine import Setting, SimResult


def result_filename(result: SimResult) -> str:
    return f"{result.scenario_id}__{result.setting.value}__s{result.seed}.jsonl"


def _frame_record(kind: str, frame: int, state: AgentState) -> dict:
    return {
        "type": kind,
        "frame": frame,
        "x": state.x,
        "y": state.y,
        "psi": state.psi,
        "v": state.v,
        "length": state.length,
        "width": state.width,
    }


def save_result(result: SimResult, path: str | Path) -> None:
    records: list[dict] = [
        {
            "type": "meta",
            "scenario_id": result.scenario_id,
            "setting": result.setting.value,
            "seed": result.seed,
            "failed": result.failed,
            "failure": result.failure,
            "dt": result.ground_truth.dt,
            "t0": result.ground_truth.start_frame,
        }
    ]
    for i, state in enumerate(result.ground_truth.states):
        records.append(_frame_record("gt", result.ground_truth.start_frame + i, state))
    if result.simulated is not None:
        for i, state in enumerate(result.simulated.states):
            records.append(_frame_record("frame", result.simulated.start_frame + i, state))
    for trace in result.predictions:
        records.append(
            {
                "type": "prediction",
                "start_frame": trace.start_frame,
                "points": [list(p) for p in trace.points],
            }
        )
    for frame, agent_id in result.collisions:
        records.append({"type": "collision", "frame": frame, "agent": agent_id})
    with Path(path).open("w") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def load_result(path: str | Path) -> SimResult:
    meta: dict | None = None
    gt: list[tuple[int, AgentState]] = []
    frames: list[tuple[int, AgentState]] = []
    predictions: list[PlanarTrace] = []
    collisions: list[tuple[int, str]] = []
    dt = 0.1
    with Path(path).open() as fh:
        for line in fh:
            record = json.loads(line)
            kind = record["type"]
            if kind == "meta":
                meta = record
                dt = record["dt"]
            elif kind in ("gt", "frame"):
                state = AgentState(
                    record["x"],
                    record["y"],
                    record["psi"],
                    record["v"],
                    record["length"],
                    record["width"],
                )
                (gt if kind == "gt" else frames).append((record["frame"], state))
            elif kind == "prediction":
                predictions.append(
                    PlanarTrace(
                        record["start_frame"], dt, tuple((x, y) for x, y in record["points"])
                    )
                )
            elif kind == "collision":
                collisions.append((record["frame"], record["agent"]))
            else:
                raise ValueError(f"{path}: unknown record type {kind!r}")
    if meta is None or not gt:
        raise ValueError(f"{path}: missing meta or ground-truth records")
    ground_truth = Trajectory(gt[0][0], dt, tuple(s for _, s in sorted(gt)))
    simulated = (
        Trajectory(frames[0][0], dt, tuple(s for _, s in sorted(frames))) if frames else None
    )
    return SimResult(
        scenario_id=meta["scenario_id"],
        setting=Setting(meta["setting"]),
        simulated=simulated,
        predictions=predictions,
        ground_truth=ground_truth,
        collisions=collisions,
        failed=meta["failed"],
        failure=meta.get("failure"),
        seed=meta.get("seed", 0),
    )


def load_results(directory: str | Path) -> list[SimResult]:
    """Load every .jsonl result in a directory, sorted by filename."""
    paths = sorted(Path(directory).glob("*.jsonl"))
    if not paths:
        raise ValueError(f"no result files in {directory}")
    return [load_result(p) for p in paths]
