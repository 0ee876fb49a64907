"""Hexagonal astrobot swarm coordination simulator and convergence predictor."""

__version__ = "0.1.0"

from .datastore import Dataset, SplitPlan, load_dataset, monte_carlo_splits, save_dataset
from .evaluation import (
    ConfusionCounts,
    EvaluationResult,
    MetricsReport,
    ROCResult,
    confusion,
    metrics,
    monte_carlo_evaluate,
    roc_sweep,
    sweep,
)
from .geometry import (
    ArmPose,
    AstrobotSpec,
    Neighborhood,
    SwarmLayout,
    WorkspaceError,
    arm_chain,
    build_hex_swarm,
    hex_capacity,
    inverse_kinematics,
    layout_fingerprint,
    load_layout,
    min_chain_distance,
    neighborhood_of,
    sample_target,
    save_layout,
)
from .oracle import Configuration, SimParams, assign_targets, generate_dataset, simulate
from .predictor import (
    ConvergencePredictor,
    Hyperparameters,
    PredictionResult,
    WeightVector,
    frequency_vectors,
    localized_predict,
    predict_global,
    weight_vector,
)

__all__ = [
    "__version__",
    "ArmPose",
    "AstrobotSpec",
    "Configuration",
    "ConfusionCounts",
    "ConvergencePredictor",
    "Dataset",
    "EvaluationResult",
    "Hyperparameters",
    "MetricsReport",
    "Neighborhood",
    "PredictionResult",
    "ROCResult",
    "SimParams",
    "SplitPlan",
    "SwarmLayout",
    "WeightVector",
    "WorkspaceError",
    "arm_chain",
    "assign_targets",
    "build_hex_swarm",
    "confusion",
    "frequency_vectors",
    "generate_dataset",
    "hex_capacity",
    "inverse_kinematics",
    "layout_fingerprint",
    "load_dataset",
    "load_layout",
    "localized_predict",
    "metrics",
    "min_chain_distance",
    "monte_carlo_evaluate",
    "monte_carlo_splits",
    "neighborhood_of",
    "predict_global",
    "roc_sweep",
    "sample_target",
    "save_dataset",
    "save_layout",
    "simulate",
    "sweep",
    "weight_vector",
]
