"""Cross-language checks against the bundled predictor server.

These drive the Node implementation in predictor-server/ through the same
client the engine uses; they require `node` and a built dist/main.js (see
predictor-server/package.json: npm run build).
"""
import json
import shutil
import subprocess
from pathlib import Path

import numpy as np
import pytest

from reacsim.engine import (
    PredictorSpec,
    Setting,
    SimConfig,
    build_observation,
    make_predictor,
    run_closed_loop,
)
from reacsim.predictors import (
    ConstantVelocityPredictor,
    ExternalPredictorHandle,
    OutputKind,
    ProtocolError,
)
from reacsim.synthetic import benchmark_scenarios

from test_acceptance import criterion

SERVER = Path(__file__).resolve().parent.parent / "predictor-server" / "dist" / "main.js"

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not SERVER.exists(),
    reason="needs node and a built predictor-server (npm run build)",
)


def server_command(*args: str) -> tuple[str, ...]:
    return ("node", str(SERVER)) + args


@criterion("cross-boundary equivalence: external and in-process baselines agree")
def test_cross_boundary_equivalence():
    cfg = SimConfig(setting=Setting.XY)
    scenarios = benchmark_scenarios(10, seed=31)
    for scenario in scenarios:
        with ExternalPredictorHandle(
            server_command("--model", "constant_velocity"),
            OutputKind.POSITIONS,
            cfg.dt,
            cfg.t_obs,
            cfg.t_horizon,
        ) as handle:
            external = run_closed_loop(scenario, handle, cfg)
        internal = run_closed_loop(scenario, ConstantVelocityPredictor(cfg.t_horizon), cfg)
        assert not external.failed and not internal.failed
        delta = np.abs(external.simulated.positions() - internal.simulated.positions())
        assert delta.max() < 1e-9, (scenario.id, delta.max())


@criterion("protocol robustness: bad requests and bad responses fail softly")
def test_protocol_robustness(tmp_path):
    # malformed request: server answers with an error message and keeps serving
    proc = subprocess.Popen(
        server_command("--model", "constant_velocity"),
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        text=True,
    )
    try:
        hello = {
            "type": "hello",
            "version": 1,
            "dt": 0.1,
            "t_obs": 10,
            "t_horizon": 30,
            "output_kind": "positions",
        }
        proc.stdin.write(json.dumps(hello) + "\n")
        proc.stdin.flush()
        assert json.loads(proc.stdout.readline())["type"] == "ready"
        proc.stdin.write("this is not json\n")
        proc.stdin.flush()
        assert json.loads(proc.stdout.readline())["type"] == "error"
        assert proc.poll() is None  # still alive
        short_history = {
            "type": "predict",
            "target": [[0.0, 0.0, 0.0, 10.0]] * 9,
            "neighbors": {},
            "map": [],
        }
        proc.stdin.write(json.dumps(short_history) + "\n")
        proc.stdin.flush()
        assert json.loads(proc.stdout.readline())["type"] == "error"
        assert proc.poll() is None
        proc.stdin.write(json.dumps({"type": "bye"}) + "\n")
        proc.stdin.flush()
        assert proc.wait(timeout=5.0) == 0  # bye exits 0, as specified
    finally:
        if proc.poll() is None:
            proc.kill()

    # short prediction and NaN payload: the client raises a protocol error
    # and the scripted server survives both
    script = tmp_path / "bad.jsonl"
    short_points = [[float(i), 0.0] for i in range(29)]
    nan_points = [[float(i), 0.0] for i in range(30)]
    nan_points[4][1] = float("nan")
    # json.dumps spells the NaN literal the way the scripted server replays it
    script.write_text(
        json.dumps({"type": "prediction", "positions": short_points})
        + "\n"
        + json.dumps({"type": "prediction", "positions": nan_points})
        + "\n"
    )
    scenario = benchmark_scenarios(1, seed=5)[0]
    cfg = SimConfig(setting=Setting.XY)
    with ExternalPredictorHandle(
        server_command("--model", "scripted", "--script", str(script)),
        OutputKind.POSITIONS,
        cfg.dt,
        cfg.t_obs,
        cfg.t_horizon,
    ) as handle:
        obs_scenario = run_closed_loop(scenario, handle, cfg)
        assert obs_scenario.failed  # short prediction aborts the run softly
        assert "expected 30" in obs_scenario.failure
        assert handle._proc.poll() is None  # server alive after the bad line
        # second scripted line: the NaN payload
        obs = build_observation(scenario, [], scenario.t0, cfg)
        with pytest.raises(ProtocolError, match="non-finite"):
            handle.predict(obs)
        assert handle._proc.poll() is None


def test_external_spec_through_factory():
    cfg = SimConfig(setting=Setting.XY)
    scenario = benchmark_scenarios(1, seed=8)[0]
    spec = PredictorSpec("external", command=server_command("--model", "constant_velocity"))
    predictor = make_predictor(spec, scenario, cfg)
    try:
        result = run_closed_loop(scenario, predictor, cfg)
    finally:
        predictor.close()
    assert not result.failed
    reference = run_closed_loop(scenario, ConstantVelocityPredictor(cfg.t_horizon), cfg)
    assert np.allclose(
        result.simulated.positions(), reference.simulated.positions(), atol=1e-9
    )


def test_external_bicycle_head():
    cfg = SimConfig(setting=Setting.KINEMATIC)
    scenario = benchmark_scenarios(1, seed=8)[0]
    spec = PredictorSpec("external", command=server_command("--model", "constant_control"))
    predictor = make_predictor(spec, scenario, cfg)
    try:
        result = run_closed_loop(scenario, predictor, cfg)
    finally:
        predictor.close()
    assert not result.failed
    assert len(result.simulated) == cfg.t_sim
