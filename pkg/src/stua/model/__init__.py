from .uncertainty import (
    UncertaintyHead,
    aggregate,
    embed_period,
    evolve_uncertainty,
    external_uncertainty,
    fm_interactions,
    internal_uncertainty,
    pair_indices,
    period_similarity,
)
from .gate import RecalibrationGate, recalibrate
from .network import (
    ModelConfig,
    UncertaintyAwareModel,
    init_parameters,
    parameter_group,
)
from .predictor import MobilityPredictor, build_steps, gcn_forward, predict_mobility

__all__ = [
    "UncertaintyHead", "aggregate", "embed_period", "evolve_uncertainty",
    "external_uncertainty", "fm_interactions", "internal_uncertainty",
    "pair_indices", "period_similarity", "RecalibrationGate", "recalibrate",
    "ModelConfig", "UncertaintyAwareModel", "init_parameters", "parameter_group",
    "MobilityPredictor", "build_steps", "gcn_forward", "predict_mobility",
]
