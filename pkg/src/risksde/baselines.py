"""Comparison systems: risk-unaware diffusion and risk-conditional schemes.

All baselines train with the standard (risk-unaware) forward process; risk
enters only as extra model input or as a guidance term added to the score
during the backward pass:

* ``standard`` — risks discarded entirely.
* ``risk-variable`` — the model learns the joint law of ``z = x ++ r``; at
  sampling a parameter-free pull ``-gamma * r(t) / ||r(t)||`` acts on the
  risk block.
* ``classifier-free`` — the risk vector conditions the score net, randomly
  masked during training; sampling extrapolates between the zero-risk and
  masked predictions.
* ``risk-regressor`` — a separately trained network predicts risk through a
  softplus link; the gradient of its negative log link wraps into a guidance
  term.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .datagen import RiskDataset
from .errors import InvalidArgumentError, PreconditionError
from .nn import AdamState, ScoreModel, adam_step, _sigmoid, _softplus
from .sde import SDESpec
from .training import TIME_GUARD_FRACTION, TrainConfig, TrainingTrace, train


def _new_model(spec, data_dim, out_dim=None, cond_dim=0, hidden=(64, 64),
               time_frequencies=4, init_seed=0):
    return ScoreModel.create(data_dim, hidden=hidden, time_frequencies=time_frequencies,
                             cond_dim=cond_dim, out_dim=out_dim, sde=spec,
                             rng=np.random.default_rng(init_seed))


def joint_spec(spec: SDESpec) -> SDESpec:
    """The same schedule acting on the concatenated (sample, risk) state."""
    return replace(spec, dim=2 * spec.dim)


# -- guidance rules --------------------------------------------------------


@dataclass
class GuidanceRule:
    """Base rule: with scale 0 the backward drift is exactly the unguided one."""

    gamma: float = 1.0

    def __post_init__(self):
        if self.gamma < 0:
            raise InvalidArgumentError("guidance scale must be nonnegative")

    def score(self, model, x, t):
        return np.atleast_2d(model(x, t))


@dataclass
class RiskVariableGuidance(GuidanceRule):
    """Pull the risk block of the joint state toward zero norm.

    The pull direction ``r(t) / ||r(t)||`` is undefined at the origin; it is
    taken to be zero there.
    """

    data_dim: int = 0

    def score(self, model, z, t):
        s = np.atleast_2d(model(z, t)).copy()
        if self.gamma == 0.0:
            return s
        r_block = np.atleast_2d(z)[:, self.data_dim:]
        norms = np.linalg.norm(r_block, axis=1, keepdims=True)
        direction = np.where(norms > 0, r_block / np.where(norms > 0, norms, 1.0), 0.0)
        s[:, self.data_dim:] -= self.gamma * direction
        return s


@dataclass
class ClassifierFreeGuidance(GuidanceRule):
    """Extrapolate between a conditional and the masked (unconditional) score."""

    condition: np.ndarray | None = None

    def _cond_batch(self, n, data_dim, masked: bool):
        c = np.zeros((n, data_dim + 1))
        if masked:
            c[:, -1] = 1.0
        elif self.condition is not None:
            c[:, :-1] = np.asarray(self.condition, dtype=np.float64)
        return c

    def score(self, model, x, t):
        x = np.atleast_2d(x)
        cond = self._cond_batch(x.shape[0], model.data_dim, masked=False)
        s_cond = np.atleast_2d(model(x, t, cond=cond))
        if self.gamma == 0.0:
            return s_cond
        null = self._cond_batch(x.shape[0], model.data_dim, masked=True)
        s_null = np.atleast_2d(model(x, t, cond=null))
        return (1.0 + self.gamma) * s_cond - self.gamma * s_null


@dataclass
class RiskRegressor:
    """Network predicting per-entry risk through a softplus link."""

    net: ScoreModel
    trained: bool = False

    def predict(self, x, t) -> np.ndarray:
        """Predicted risk, entrywise positive."""
        return _softplus(np.atleast_2d(self.net(x, t)))

    def penalty_gradient(self, x, t) -> np.ndarray:
        """Gradient of ``-sum_i log(1 + exp(h_i(x)))`` with respect to x."""
        if not self.trained:
            raise PreconditionError("risk regressor has not been trained")
        h = np.atleast_2d(self.net(x, t))
        return self.net.input_gradient(x, t, cotangent=-_sigmoid(h))


@dataclass
class RiskRegressorGuidance(GuidanceRule):
    """Add the regressor's negative-log-risk gradient to the score."""

    regressor: RiskRegressor | None = None

    def score(self, model, x, t):
        s = np.atleast_2d(model(x, t))
        if self.gamma == 0.0:
            return s
        if self.regressor is None:
            raise PreconditionError("no regressor attached to the guidance rule")
        return s + self.gamma * self.regressor.penalty_gradient(x, t)


# -- training entry points --------------------------------------------------


def train_standard(dataset: RiskDataset, spec: SDESpec, config: TrainConfig,
                   hidden=(64, 64), time_frequencies=4, init_seed=0):
    """Risk-unaware training: all risks forced to zero, full time interval."""
    model = _new_model(spec, dataset.dim, hidden=hidden,
                       time_frequencies=time_frequencies, init_seed=init_seed)
    return train(model, dataset.with_zero_risk(), spec, config)


def train_risk_variable(dataset: RiskDataset, spec: SDESpec, config: TrainConfig,
                        hidden=(64, 64), time_frequencies=4, init_seed=0):
    """Standard training on the concatenated state ``z = x ++ r``."""
    if dataset.R.shape != dataset.X.shape:
        raise InvalidArgumentError("every sample must carry a risk vector")
    z = np.hstack([dataset.X, dataset.R])
    z_spec = joint_spec(spec)
    joint = RiskDataset(X=z, R=np.zeros_like(z))
    model = _new_model(z_spec, 2 * dataset.dim, hidden=hidden,
                       time_frequencies=time_frequencies, init_seed=init_seed)
    return train(model, joint, z_spec, config)


def train_classifier_free(dataset: RiskDataset, spec: SDESpec, config: TrainConfig,
                          mask_probability: float = 0.1, hidden=(64, 64),
                          time_frequencies=4, init_seed=0):
    """Condition the score net on risk, masking it randomly during training.

    The mask is an extra binary input channel (1 = masked) with the risk
    zeroed, which lets the same network act unconditionally.
    """
    if not (0.0 < mask_probability < 1.0):
        raise InvalidArgumentError("mask probability must lie in (0, 1)")
    d = dataset.dim
    model = _new_model(spec, d, cond_dim=d + 1, hidden=hidden,
                       time_frequencies=time_frequencies, init_seed=init_seed)

    def cond_fn(rng, idx):
        masked = rng.random(idx.shape[0]) < mask_probability
        cond = np.zeros((idx.shape[0], d + 1))
        cond[:, :d] = dataset.R[idx]
        cond[masked, :d] = 0.0
        cond[:, d] = masked
        return cond

    return train(model, dataset.with_zero_risk(), spec, config, cond_fn=cond_fn)


def train_risk_regressor(dataset: RiskDataset, spec: SDESpec, config: TrainConfig,
                         hidden=(64, 64), time_frequencies=4, init_seed=0):
    """Fit ``softplus(h(x(t), t)) ~ r`` on forward-noised inputs.

    Returns the regressor and its loss trace. Inputs are noised with the
    standard kernel across uniformly sampled times so the guidance stays
    meaningful along the whole backward path.
    """
    net = ScoreModel.create(dataset.dim, hidden=hidden, time_frequencies=time_frequencies,
                            cond_dim=0, out_dim=dataset.dim, sde=None,
                            rng=np.random.default_rng(init_seed))
    rng = np.random.default_rng(config.seed)
    state = AdamState.for_model(net, learning_rate=config.learning_rate)
    delta = TIME_GUARD_FRACTION * spec.T
    losses = np.empty(config.steps)
    X, R = dataset.X, dataset.R
    for step in range(config.steps):
        idx = rng.integers(0, dataset.n, size=config.batch_size)
        t_b = delta + rng.random(config.batch_size) * (spec.T - delta)
        u = spec.u_of(t_b)
        v0 = np.sqrt(np.maximum(spec.v0_sq_of(t_b), 0.0))
        x_t = u[:, None] * X[idx] + v0[:, None] * rng.standard_normal(X[idx].shape)
        X_in, _ = net._assemble(x_t, t_b, None)
        h, cache = net.raw_forward(X_in, want_cache=True)
        pred = _softplus(h)
        resid = pred - R[idx]
        losses[step] = float(np.mean(np.sum(resid**2, axis=1)))
        d_h = 2.0 * resid * _sigmoid(h) / config.batch_size
        grads = net.backward(X_in, cache, d_h)
        adam_step(net, grads, state)
    trace = TrainingTrace(losses=losses, times=np.full(config.steps, np.nan),
                          skipped_fraction=0.0)
    return RiskRegressor(net=net, trained=True), trace
