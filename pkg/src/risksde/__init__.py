"""Risk-sensitive stochastic differential equations for diffusion models.

Train score models on noise-corrupted samples annotated with per-entry risk,
using risk-adjusted forward processes that make corrupted samples
distributionally indistinguishable from clean ones over a computable
stability interval.
"""

from .sde import (
    SDESpec,
    RiskCoefficients,
    StabilityInterval,
    base_schedules,
    risk_coefficients,
    drift,
    diffusion,
    stability_interval,
    forward_kernel_sample,
)
from .noise import (
    NoiseModel,
    QuadratureGrid,
    sample_noise,
    psi_gaussian,
    psi_cauchy,
    psi_numeric,
    general_risk_coefficients,
)
from .nn import ScoreModel, AdamState, adam_step, loss_and_grads, save_checkpoint, load_checkpoint
from .training import TrainConfig, TrainingTrace, train, risk_free_loss, sample_training_time
from .sampling import SamplerConfig, reverse_sample, guided_reverse_sample
from .baselines import (
    GuidanceRule,
    RiskRegressor,
    train_standard,
    train_risk_variable,
    train_classifier_free,
    train_risk_regressor,
)
from .datagen import MixtureSpec, RiskDataset, generate_mixture, mask_table, knn_impute_with_risk
from .metrics import (
    EvalReport,
    frechet_distance,
    prd_curve,
    three_sigma_coverage,
    component_balance,
    energy_distance,
    energy_test,
)
from .estimators import (
    RiskSensitiveDiffusion,
    StandardDiffusion,
    RiskVariableDiffusion,
    ClassifierFreeDiffusion,
    RiskRegressorDiffusion,
    KNNRiskImputer,
)

__version__ = "0.1.0"

__all__ = [
    "SDESpec", "RiskCoefficients", "StabilityInterval", "base_schedules",
    "risk_coefficients", "drift", "diffusion", "stability_interval",
    "forward_kernel_sample",
    "NoiseModel", "QuadratureGrid", "sample_noise", "psi_gaussian",
    "psi_cauchy", "psi_numeric", "general_risk_coefficients",
    "ScoreModel", "AdamState", "adam_step", "loss_and_grads",
    "save_checkpoint", "load_checkpoint",
    "TrainConfig", "TrainingTrace", "train", "risk_free_loss", "sample_training_time",
    "SamplerConfig", "reverse_sample", "guided_reverse_sample",
    "GuidanceRule", "RiskRegressor", "train_standard", "train_risk_variable",
    "train_classifier_free", "train_risk_regressor",
    "MixtureSpec", "RiskDataset", "generate_mixture", "mask_table",
    "knn_impute_with_risk",
    "EvalReport", "frechet_distance", "prd_curve", "three_sigma_coverage",
    "component_balance", "energy_distance", "energy_test",
    "RiskSensitiveDiffusion", "StandardDiffusion", "RiskVariableDiffusion",
    "ClassifierFreeDiffusion", "RiskRegressorDiffusion", "KNNRiskImputer",
]
