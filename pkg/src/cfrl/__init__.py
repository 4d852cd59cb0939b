"""Human-like car-following modeling: simulation environment, DDPG agent,
traditional and data-driven baselines, calibration and validation tools."""

__version__ = "0.1.0"

from .env import CFState, SimTrajectory, clamp_action, run_episode, step_state
from .data import (
    CFPeriod,
    DriverDataset,
    RawLogRecord,
    StyleFeatures,
    cluster_driving_styles,
    extract_periods,
    split_calibration_validation,
)
from .synth import generate_population, generate_synthetic_driver
from .idm import IDMParams, IDMPolicy, idm_acceleration, idm_equilibrium_gap
from .metrics import pooled_rmspe, rmspe
from .ddpg import DdpgAgent, TrainConfig, retrain, reward, train, variant_config
from .ga import GAConfig, ga_calibrate_idm
from .evaluate import (
    EvalReport,
    ErrorMatrix,
    compare_models,
    evaluate_policy,
    inter_driver_validate,
    intra_driver_validate,
)

__all__ = [
    "CFState",
    "SimTrajectory",
    "clamp_action",
    "run_episode",
    "step_state",
    "CFPeriod",
    "DriverDataset",
    "RawLogRecord",
    "StyleFeatures",
    "cluster_driving_styles",
    "extract_periods",
    "split_calibration_validation",
    "generate_population",
    "generate_synthetic_driver",
    "IDMParams",
    "IDMPolicy",
    "idm_acceleration",
    "idm_equilibrium_gap",
    "pooled_rmspe",
    "rmspe",
    "DdpgAgent",
    "TrainConfig",
    "retrain",
    "reward",
    "train",
    "variant_config",
    "GAConfig",
    "ga_calibrate_idm",
    "EvalReport",
    "ErrorMatrix",
    "compare_models",
    "evaluate_policy",
    "inter_driver_validate",
    "intra_driver_validate",
]
