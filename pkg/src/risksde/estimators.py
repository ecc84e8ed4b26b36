"""Scikit-learn style estimators over the training and sampling pipeline.

The generative estimators follow the ``fit(X, R) / sample(n)`` pattern of
``sklearn.mixture`` models and work with ``get_params`` / ``set_params`` /
``clone``; the imputer is a transformer producing the imputed table with the
derived risk matrix on ``risk_``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from . import baselines
from .baselines import (
    ClassifierFreeGuidance,
    RiskRegressorGuidance,
    RiskVariableGuidance,
    joint_spec,
)
from .datagen import RiskDataset, TabularPipelineSpec, knn_impute_with_risk
from .errors import PreconditionError
from .sampling import SamplerConfig, guided_reverse_sample, reverse_sample
from .sde import SDESpec
from .training import TrainConfig, train
from .validation import as_matrix


class _DiffusionEstimator(BaseEstimator):
    """Shared parameter surface of all diffusion estimators."""

    _method = None

    def __init__(self, family="vp", horizon=1.0, beta_min=0.1, beta_max=20.0,
                 sigma_min=0.01, sigma_max=50.0, hidden=(64, 64), time_features=4,
                 steps=20_000, batch_size=256, learning_rate=1e-3,
                 lambda_schedule="uniform", p_force=0.0, v_floor=1e-5,
                 noise_kind="gaussian", sample_steps=1000, guidance_scale=1.0,
                 mask_probability=0.1, random_state=0):
        self.family = family
        self.horizon = horizon
        self.beta_min = beta_min
        self.beta_max = beta_max
        self.sigma_min = sigma_min
        self.sigma_max = sigma_max
        self.hidden = hidden
        self.time_features = time_features
        self.steps = steps
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.lambda_schedule = lambda_schedule
        self.p_force = p_force
        self.v_floor = v_floor
        self.noise_kind = noise_kind
        self.sample_steps = sample_steps
        self.guidance_scale = guidance_scale
        self.mask_probability = mask_probability
        self.random_state = random_state

    # -- helpers --

    def _spec(self, dim: int) -> SDESpec:
        return SDESpec(family=self.family, T=self.horizon, beta_min=self.beta_min,
                       beta_max=self.beta_max, sigma_min=self.sigma_min,
                       sigma_max=self.sigma_max, dim=dim)

    def _train_config(self) -> TrainConfig:
        return TrainConfig(steps=self.steps, batch_size=self.batch_size,
                           learning_rate=self.learning_rate,
                           lambda_schedule=self.lambda_schedule,
                           p_force=self.p_force, v_floor=self.v_floor,
                           seed=self.random_state)

    def _dataset(self, X, R) -> RiskDataset:
        X = as_matrix(X, "X")
        if R is None:
            R = np.zeros_like(X)
        return RiskDataset(X=as_matrix(X, "X"), R=as_matrix(R, "R", cols=X.shape[1]))

    def _require_fitted(self):
        if not hasattr(self, "model_"):
            raise PreconditionError("estimator has not been fitted")

    def _sampler_config(self) -> SamplerConfig:
        return SamplerConfig(n_steps=self.sample_steps)

    def _rng(self, random_state) -> np.random.Generator:
        seed = self.random_state if random_state is None else random_state
        return np.random.default_rng(seed)

    # -- default generation path (overridden where guidance applies) --

    def sample(self, n: int, random_state=None) -> np.ndarray:
        self._require_fitted()
        return reverse_sample(self.model_, self.spec_, self._sampler_config(),
                              self._rng(random_state), n=n)


class RiskSensitiveDiffusion(_DiffusionEstimator):
    """Diffusion trained with risk-adjusted forward processes."""

    def fit(self, X, R=None):
        dataset = self._dataset(X, R)
        self.spec_ = self._spec(dataset.dim)
        model = baselines._new_model(self.spec_, dataset.dim, hidden=tuple(self.hidden),
                                     time_frequencies=self.time_features,
                                     init_seed=self.random_state)
        self.model_, self.trace_ = train(model, dataset, self.spec_,
                                         self._train_config(),
                                         noise_kind=self.noise_kind)
        return self


class StandardDiffusion(_DiffusionEstimator):
    """Risk-unaware diffusion; any provided risks are ignored."""

    def fit(self, X, R=None):
        dataset = self._dataset(X, None)
        self.spec_ = self._spec(dataset.dim)
        self.model_, self.trace_ = baselines.train_standard(
            dataset, self.spec_, self._train_config(), hidden=tuple(self.hidden),
            time_frequencies=self.time_features, init_seed=self.random_state)
        return self


class RiskVariableDiffusion(_DiffusionEstimator):
    """Joint model over (sample, risk) with a norm-shrinking pull at sampling."""

    def fit(self, X, R=None):
        dataset = self._dataset(X, R)
        self.data_dim_ = dataset.dim
        base = self._spec(dataset.dim)
        self.spec_ = joint_spec(base)
        self.model_, self.trace_ = baselines.train_risk_variable(
            dataset, base, self._train_config(), hidden=tuple(self.hidden),
            time_frequencies=self.time_features, init_seed=self.random_state)
        return self

    def sample_joint(self, n: int, random_state=None) -> np.ndarray:
        self._require_fitted()
        rule = RiskVariableGuidance(gamma=self.guidance_scale, data_dim=self.data_dim_)
        return guided_reverse_sample(self.model_, self.spec_, self._sampler_config(),
                                     rule, self._rng(random_state), n=n)

    def sample(self, n: int, random_state=None) -> np.ndarray:
        return self.sample_joint(n, random_state)[:, : self.data_dim_]


class ClassifierFreeDiffusion(_DiffusionEstimator):
    """Risk-conditioned score net with random condition masking."""

    def fit(self, X, R=None):
        dataset = self._dataset(X, R)
        self.spec_ = self._spec(dataset.dim)
        self.model_, self.trace_ = baselines.train_classifier_free(
            dataset, self.spec_, self._train_config(),
            mask_probability=self.mask_probability, hidden=tuple(self.hidden),
            time_frequencies=self.time_features, init_seed=self.random_state)
        return self

    def sample(self, n: int, random_state=None, condition=None) -> np.ndarray:
        self._require_fitted()
        rule = ClassifierFreeGuidance(gamma=self.guidance_scale, condition=condition)
        return guided_reverse_sample(self.model_, self.spec_, self._sampler_config(),
                                     rule, self._rng(random_state), n=n)


class RiskRegressorDiffusion(_DiffusionEstimator):
    """Standard diffusion steered by a separately trained risk regressor."""

    def fit(self, X, R=None):
        dataset = self._dataset(X, R)
        self.spec_ = self._spec(dataset.dim)
        self.model_, self.trace_ = baselines.train_standard(
            dataset, self.spec_, self._train_config(), hidden=tuple(self.hidden),
            time_frequencies=self.time_features, init_seed=self.random_state)
        self.regressor_, self.regressor_trace_ = baselines.train_risk_regressor(
            dataset, self.spec_, self._train_config(), hidden=tuple(self.hidden),
            time_frequencies=self.time_features, init_seed=self.random_state + 1)
        return self

    def sample(self, n: int, random_state=None) -> np.ndarray:
        self._require_fitted()
        rule = RiskRegressorGuidance(gamma=self.guidance_scale, regressor=self.regressor_)
        return guided_reverse_sample(self.model_, self.spec_, self._sampler_config(),
                                     rule, self._rng(random_state), n=n)


class KNNRiskImputer(TransformerMixin, BaseEstimator):
    """Impute missing cells by neighborhood medians and derive per-cell risk.

    ``transform`` returns the imputed table; the matching risk matrix (zero
    at observed cells) is stored on ``risk_``.
    """

    def __init__(self, n_neighbors: int = 10):
        self.n_neighbors = n_neighbors

    def fit(self, X, y=None):
        as_matrix(X, "X", allow_nan=True)
        return self

    def transform(self, X) -> np.ndarray:
        spec = TabularPipelineSpec(n_neighbors=self.n_neighbors)
        result = knn_impute_with_risk(as_matrix(X, "X", allow_nan=True), spec)
        self.risk_ = result.R
        return result.X
