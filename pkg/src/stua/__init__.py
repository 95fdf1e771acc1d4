"""Uncertainty-aware forecasting of collective human mobility on urban graphs."""

__version__ = "0.1.0"

from .graph import (
    UrbanGraph,
    PeriodStack,
    build_period_stack,
    distance_matrix,
    gravity_adjacency,
    normalize_adjacency,
    period_adjacency,
)
from .data import (
    ContextTensor,
    MobilityTensor,
    Sample,
    SynthConfig,
    TurbulenceSchedule,
    TurbulenceSpec,
    inject_noise,
    ingest_csv,
    make_training_samples,
    synth_dataset,
    synth_mobility,
)
from .indicators import (
    neighbor_sets,
    quality_indicator,
    st_variance,
    target_variance,
    variance_views,
)
from .oracle import oracle_st_variance
from .metrics import mape, picp, rmse
from .trainer import TrainConfig, compute_loss, gradcheck, train
from .experiment import EvalReport, run_experiment
from .config import ExperimentConfig, load_config

__all__ = [
    "__version__",
    "UrbanGraph", "PeriodStack", "build_period_stack", "distance_matrix",
    "gravity_adjacency", "normalize_adjacency", "period_adjacency",
    "ContextTensor", "MobilityTensor", "Sample", "SynthConfig",
    "TurbulenceSchedule", "TurbulenceSpec", "inject_noise", "ingest_csv",
    "make_training_samples", "synth_dataset", "synth_mobility",
    "neighbor_sets", "quality_indicator", "st_variance", "target_variance",
    "variance_views", "oracle_st_variance", "mape", "picp", "rmse",
    "TrainConfig", "compute_loss", "gradcheck", "train",
    "EvalReport", "run_experiment", "ExperimentConfig", "load_config",
]
