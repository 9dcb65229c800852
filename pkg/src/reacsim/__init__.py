"""Closed-loop reactive traffic simulation with stability metrics."""

from .core import (
    AgentState,
    OrientedBox,
    PlanarTrace,
    Scenario,
    Trajectory,
    box_overlap,
    wrap_angle,
)
from .engine import (
    ALL_SETTINGS,
    PredictorSpec,
    Setting,
    SimConfig,
    SimResult,
    make_predictor,
    run_ablation,
    run_closed_loop,
)
from .kinematics import (
    BicycleControl,
    BicycleGeometry,
    KinematicBounds,
    ParticleControl,
    ParticleState,
    beta_from_gamma,
    bicycle_rollout,
    bicycle_step,
    estimate_geometry,
    gamma_from_beta,
    particle_rollout,
    particle_step,
)
from .metrics import (
    MissThresholds,
    SimReport,
    ade,
    aggregate,
    collision_rate,
    fde,
    miss_rate,
    motion_smoothness,
    trajectory_difference,
)
from .predictors import (
    ConstantControlPredictor,
    ConstantVelocityPredictor,
    ExternalPredictorHandle,
    LaneFollowPredictor,
    NoisyPredictor,
    ObservationWindow,
    OracleReplayPredictor,
    OutputKind,
    PredictionOutput,
)
from .smoothing import SmootherState, smooth_update
from .spline import derive_profile, fit_spline

__version__ = "0.1.0"
