"""Closed-loop simulation: predict, decode, smooth, commit, repeat.

One agent is simulated; every other agent replays its log. Each iteration
the predictor sees the latest observation window (ground truth before the
simulation starts, simulated states afterwards), its output is decoded to a
positional trace, optionally blended by the smoothing layer, and the first
few frames are committed as the agent's realized motion.
"""
from __future__ import annotations

import hashlib
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable, Sequence

from .core import AgentState, PlanarTrace, Scenario, Trajectory, box_overlap
from .kinematics import (
    KinematicBounds,
    bicycle_rollout,
    clamp_bicycle,
    clamp_particle,
    estimate_geometry,
    particle_rollout,
    rollout_positions,
)
from .predictors import (
    BicycleHeadAdapter,
    ConstantControlPredictor,
    ConstantVelocityPredictor,
    ExternalPredictorHandle,
    LaneFollowPredictor,
    NoisyPredictor,
    ObservationWindow,
    OracleReplayPredictor,
    OutputKind,
    ParticleHeadAdapter,
    Predictor,
    PredictorError,
)
from .smoothing import SmootherState, smooth_update
from .spline import derive_profile


class Setting(str, Enum):
    """The six framework settings: decoding head x smoothing on/off."""

    XY = "xy"
    XY_WEIGHTED = "xy_weighted"
    KINEMATIC = "kinematic"
    KINEMATIC_WEIGHTED = "kinematic_weighted"
    AXAY = "axay"
    AXAY_WEIGHTED = "axay_weighted"

    @property
    def weighted(self) -> bool:
        return self.value.endswith("_weighted")

    @property
    def head(self) -> OutputKind:
        if self.value.startswith("xy"):
            return OutputKind.POSITIONS
        if self.value.startswith("kinematic"):
            return OutputKind.BICYCLE_CONTROLS
        return OutputKind.PARTICLE_CONTROLS


ALL_SETTINGS = tuple(Setting)


@dataclass(frozen=True)
class SimConfig:
    """Horizons, rates, and numeric knobs of one simulation run."""

    setting: Setting = Setting.XY
    t_obs: int = 10
    t_horizon: int = 30
    t_update: int = 1
    t_sim: int = 50
    dt: float = 0.1
    observe_radius: float = 70.0
    alpha: float = 0.2
    bounds: KinematicBounds = field(default_factory=KinematicBounds)
    lr_ratio: float = 0.5
    geometry_policy: str = "fixed-ratio"
    v_eps: float = 0.1

    def __post_init__(self) -> None:
        if not 1 <= self.t_update <= self.t_horizon:
            raise ValueError(f"t_update must lie in [1, t_horizon], got {self.t_update}")
        if self.t_sim < 1:
            raise ValueError(f"t_sim must be at least 1, got {self.t_sim}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_obs < 1:
            raise ValueError(f"t_obs must be at least 1, got {self.t_obs}")


@dataclass
class SimResult:
    """Realized motion, per-iteration predictions, and collision events."""

    scenario_id: str
    setting: Setting
    simulated: Trajectory | None
    predictions: list[PlanarTrace]
    ground_truth: Trajectory
    collisions: list[tuple[int, str]]
    failed: bool = False
    failure: str | None = None
    seed: int = 0

    @property
    def collided(self) -> bool:
        return bool(self.collisions)


def build_observation(
    scenario: Scenario,
    committed: Sequence[AgentState],
    t: int,
    cfg: SimConfig,
) -> ObservationWindow:
    """Observation window for predicting at time step t.

    The target history spans frames [t - t_obs, t): ground-truth log frames
    before the simulation started, committed simulated frames afterwards.
    Neighbors replay their logs, clipped to the window and filtered by
    distance to the target's latest position at the prediction instant.
    """
    t0 = scenario.t0
    log = scenario.target_log
    states = []
    for f in range(t - cfg.t_obs, t):
        states.append(log.state_at(f) if f < t0 else committed[f - t0])
    history = Trajectory(t - cfg.t_obs, cfg.dt, tuple(states))
    here = history.states[-1]

    neighbors: dict[str, Trajectory] = {}
    for agent_id, traj in sorted(scenario.others().items()):
        lo = max(traj.start_frame, t - cfg.t_obs)
        hi = min(traj.end_frame, t)
        if hi <= lo or not traj.covers(t - 1, t):
            continue
        current = traj.state_at(t - 1)
        if math.hypot(current.x - here.x, current.y - here.y) > cfg.observe_radius:
            continue
        neighbors[agent_id] = traj.window(lo, hi)
    return ObservationWindow(history, neighbors, scenario.map, cfg.dt)


def _decode(
    out_kind: OutputKind,
    prediction,
    current: AgentState,
    history: Trajectory,
    t: int,
    cfg: SimConfig,
) -> tuple[PlanarTrace, Trajectory | None]:
    """Turn a prediction into a T-frame positional trace (plus rollout)."""
    if out_kind is OutputKind.POSITIONS:
        trace = prediction.positions
        if trace.start_frame != t or len(trace) != cfg.t_horizon:
            raise PredictorError(
                f"prediction covers [{trace.start_frame}, {trace.end_frame}), "
                f"expected [{t}, {t + cfg.t_horizon})"
            )
        return trace, None
    if out_kind is OutputKind.BICYCLE_CONTROLS:
        controls = [clamp_bicycle(u, cfg.bounds) for u in prediction.bicycle_controls]
        geom = estimate_geometry(history, current.length, cfg.geometry_policy, cfg.lr_ratio)
        roll = bicycle_rollout(current, controls, geom, cfg.dt, start_frame=t - 1)
    else:
        controls = [clamp_particle(u, cfg.bounds) for u in prediction.particle_controls]
        roll = particle_rollout(current, controls, cfg.dt, start_frame=t - 1)
    if len(roll) != cfg.t_horizon + 1:
        raise PredictorError(f"control sequence of length {len(roll) - 1} != {cfg.t_horizon}")
    return rollout_positions(roll), roll


def _committed_states(
    setting: Setting,
    trace: PlanarTrace,
    roll: Trajectory | None,
    current: AgentState,
    n_commit: int,
    cfg: SimConfig,
) -> list[AgentState]:
    """Derive the full states of the freshly committed frames.

    The bicycle head carries exact state channels, so the unweighted
    kinematic setting commits rollout states directly. Everything else
    derives heading (and, except for the particle head, speed) from a spline
    over the positional trace.
    """
    if setting is Setting.KINEMATIC:
        assert roll is not None
        return list(roll.states[1 : 1 + n_commit])
    profile = derive_profile(trace, current, cfg.v_eps)
    states = list(profile.states[:n_commit])
    if setting in (Setting.AXAY, Setting.AXAY_WEIGHTED):
        assert roll is not None
        states = [
            AgentState(s.x, s.y, s.psi, roll.states[1 + i].v, s.length, s.width)
            for i, s in enumerate(states)
        ]
    return states


def run_closed_loop(scenario: Scenario, predictor: Predictor, cfg: SimConfig) -> SimResult:
    """Simulate one scenario's designated agent for t_sim frames.

    Predictor failures and diverging states abort the run, returning the
    partial result flagged as failed so stability collapses stay analyzable.
    """
    if predictor.output_kind is not cfg.setting.head:
        raise ValueError(
            f"setting {cfg.setting.value} needs a {cfg.setting.head.value} predictor, "
            f"got {predictor.output_kind.value}"
        )
    if not scenario.covers(cfg.t_obs, cfg.t_sim):
        raise ValueError(
            f"scenario {scenario.id} does not cover frames "
            f"[{scenario.t0 - cfg.t_obs}, {scenario.t0 + cfg.t_sim})"
        )
    t0 = scenario.t0
    ground_truth = scenario.target_log.window(t0, t0 + cfg.t_sim)
    neighbors = scenario.others()

    committed: list[AgentState] = []
    predictions: list[PlanarTrace] = []
    collisions: list[tuple[int, str]] = []
    smoother = SmootherState(cfg.alpha)
    failure: str | None = None

    t = t0
    while len(committed) < cfg.t_sim:
        try:
            obs = build_observation(scenario, committed, t, cfg)
            prediction = predictor.predict(obs)
            trace, roll = _decode(
                predictor.output_kind, prediction, obs.current, obs.target_history, t, cfg
            )
            if cfg.setting.weighted:
                smoother, trace = smooth_update(smoother, trace)
            predictions.append(trace)
            n_commit = min(cfg.t_update, cfg.t_sim - len(committed))
            new_states = _committed_states(cfg.setting, trace, roll, obs.current, n_commit, cfg)
        except (PredictorError, ArithmeticError, ValueError) as exc:
            failure = f"at frame {t}: {exc}"
            break
        for offset, state in enumerate(new_states):
            frame = t + offset
            box = state.box()
            for agent_id, traj in sorted(neighbors.items()):
                if traj.covers(frame, frame + 1) and box_overlap(
                    box, traj.state_at(frame).box()
                ):
                    collisions.append((frame, agent_id))
            committed.append(state)
        t += n_commit

    simulated = Trajectory(t0, cfg.dt, tuple(committed)) if committed else None
    return SimResult(
        scenario_id=scenario.id,
        setting=cfg.setting,
        simulated=simulated,
        predictions=predictions,
        ground_truth=ground_truth,
        collisions=collisions,
        failed=failure is not None,
        failure=failure,
    )


@dataclass(frozen=True)
class PredictorSpec:
    """Recipe for building a predictor, picklable for worker processes.

    ``name`` is one of constant-velocity, constant-control, lane-follow,
    oracle-replay, or external. ``noise`` > 0 wraps the positional output in
    seeded uniform noise before any head adaptation. ``command`` launches the
    external predictor process.
    """

    name: str = "constant-velocity"
    noise: float = 0.0
    command: tuple[str, ...] = ()
    timeout_ms: int = 2000


def derive_seed(base: int, scenario_id: str, setting: Setting) -> int:
    """Stable per-run seed, independent of process or iteration order."""
    digest = hashlib.sha256(f"{base}|{scenario_id}|{setting.value}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def make_predictor(
    spec: PredictorSpec, scenario: Scenario, cfg: SimConfig, seed: int = 0
) -> Predictor:
    """Build a predictor matching the configured setting's output head."""
    head = cfg.setting.head
    if spec.name == "external":
        if not spec.command:
            raise ValueError("external predictor requires a command")
        return ExternalPredictorHandle(
            spec.command, head, cfg.dt, cfg.t_obs, cfg.t_horizon, spec.timeout_ms
        )
    if spec.name == "constant-control":
        if head is not OutputKind.BICYCLE_CONTROLS:
            raise ValueError("constant-control is a bicycle-head baseline")
        if spec.noise > 0.0:
            raise ValueError("noise wrapping applies to positions-head baselines")
        return ConstantControlPredictor(cfg.t_horizon, cfg.lr_ratio, cfg.bounds)

    base: Predictor
    if spec.name == "constant-velocity":
        base = ConstantVelocityPredictor(cfg.t_horizon)
    elif spec.name == "lane-follow":
        base = LaneFollowPredictor(cfg.t_horizon)
    elif spec.name == "oracle-replay":
        base = OracleReplayPredictor(scenario.target_log, cfg.t_horizon)
    else:
        raise ValueError(f"unknown predictor {spec.name!r}")
    if spec.noise > 0.0:
        base = NoisyPredictor(base, spec.noise, derive_seed(seed, scenario.id, cfg.setting))
    if head is OutputKind.BICYCLE_CONTROLS:
        return BicycleHeadAdapter(base, cfg.lr_ratio, cfg.bounds)
    if head is OutputKind.PARTICLE_CONTROLS:
        return ParticleHeadAdapter(base, cfg.bounds)
    return base


def _run_one(args: tuple[Scenario, PredictorSpec, SimConfig, int]) -> SimResult:
    scenario, spec, cfg, seed = args
    predictor = make_predictor(spec, scenario, cfg, seed)
    try:
        result = run_closed_loop(scenario, predictor, cfg)
    finally:
        close = getattr(predictor, "close", None)
        if close is not None:
            close()
    result.seed = seed
    return result


def run_ablation(
    scenarios: Sequence[Scenario],
    specs: dict[Setting, PredictorSpec],
    cfg: SimConfig,
    seeds: Sequence[int] = (0,),
    settings: Sequence[Setting] = ALL_SETTINGS,
    sink: Callable[[SimResult], None] | None = None,
    parallelism: int = 1,
) -> list[SimResult]:
    """Run every (scenario, setting, seed) combination.

    Per-run simulation failures are recorded in the result, not raised.
    Results arrive in deterministic (scenario, setting, seed) order
    regardless of parallelism.
    """
    if not scenarios:
        raise ValueError("ablation needs at least one scenario")
    jobs = [
        (scenario, specs[setting], replace(cfg, setting=setting), seed)
        for scenario in scenarios
        for setting in settings
        for seed in seeds
    ]
    results: list[SimResult] = []
    if parallelism > 1:
        with ProcessPoolExecutor(max_workers=parallelism) as pool:
            for result in pool.map(_run_one, jobs):
                results.append(result)
                if sink is not None:
                    sink(result)
    else:
        for job in jobs:
            result = _run_one(job)
            results.append(result)
            if sink is not None:
                sink(result)
    return results
