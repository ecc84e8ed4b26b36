"""Risk-gated score-matching training loop.

Each step draws a minibatch of (sample, risk) pairs, samples a per-sample
time uniformly from the sample's stability interval (with a small guard above
the left edge, where the adjusted noise level vanishes for the worst entry),
pushes the sample through the risk-adjusted forward kernel
``x(t) = u(t) * x0 + v(r, t) * eta`` and regresses the score model onto
``-eta / v(r, t)``. Samples whose interval is empty are skipped (they carry
no usable signal); with a small probability the interval can be forced open
to cover early times on very noisy corpora.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datagen import RiskDataset
from .errors import ConfigurationError, InvalidArgumentError, NumericalFailureError, PreconditionError
from .nn import AdamState, ScoreModel, adam_step, loss_and_grads
from .noise import NoiseModel, general_risk_coefficients, psi_cauchy
from .sde import SDESpec, StabilityInterval, risk_coefficients, stability_threshold_time
from .validation import as_vector, check_time, check_unit_interval

TIME_GUARD_FRACTION = 1e-4


@dataclass
class TrainConfig:
    """Optimization settings of the training loop."""

    steps: int = 20_000
    batch_size: int = 256
    learning_rate: float = 1e-3
    lambda_schedule: str = "uniform"  # or "kernel_variance"
    p_force: float = 0.0
    v_floor: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        check_unit_interval(self.p_force, "p_force")
        if self.v_floor <= 0:
            raise InvalidArgumentError("v_floor must be positive")
        if self.lambda_schedule not in ("uniform", "kernel_variance"):
            raise InvalidArgumentError(f"unknown lambda schedule {self.lambda_schedule!r}")
        if self.steps < 1 or self.batch_size < 1:
            raise InvalidArgumentError("steps and batch_size must be >= 1")


@dataclass
class TrainingTrace:
    """Per-step diagnostics of a training run."""

    losses: np.ndarray
    times: np.ndarray
    skipped_fraction: float


def sample_training_time(interval: StabilityInterval, p_force: float,
                         rng: np.random.Generator,
                         guard_fraction: float = TIME_GUARD_FRACTION):
    """Draw a training time from the interval; None signals a skipped sample.

    Uniform over ``[t_star + delta, T]`` with guard ``delta = 1e-4 * T``;
    with probability ``p_force`` uniform over ``[delta, T]`` regardless of
    the interval.
    """
    delta = guard_fraction * interval.upper
    if p_force > 0 and rng.random() < p_force:
        return delta + rng.random() * (interval.upper - delta)
    if interval.empty:
        return None
    lo = min(interval.t_star + delta, interval.upper)
    return lo + rng.random() * (interval.upper - lo)


def risk_free_loss(model: ScoreModel, spec: SDESpec, x0, r, t: float,
                   rng: np.random.Generator, v_floor: float = 1e-5,
                   forced: bool = False, noise: NoiseModel | None = None):
    """Single-sample reparameterized loss ``||eta / v + s(x(t), t)||^2``.

    The target is a constant in the backward pass: gradients flow through
    the network only.
    """
    x0 = as_vector(x0, "x0")
    t = check_time(t, spec.T)
    if noise is not None:
        coeffs = general_risk_coefficients(spec, noise, t)
    else:
        coeffs = risk_coefficients(spec, r, t)
    if coeffs.v.shape[0] != x0.shape[0]:
        raise InvalidArgumentError("x0 and risk dimensions differ")
    if not forced and np.any(coeffs.v < v_floor):
        raise PreconditionError(
            f"adjusted noise level below the floor at t={t}; t lies outside the stability interval")
    v = np.maximum(coeffs.v, v_floor)
    eta = rng.standard_normal(x0.shape[0])
    x_t = coeffs.u * x0 + v * eta
    return loss_and_grads(model, x_t, t, targets=-eta / v)


def _per_sample_deductions(R: np.ndarray, noise_kind: str):
    """Map per-sample risk rows to (deduction rows, power of u(t))."""
    if noise_kind == "gaussian":
        return R**2, 2
    if noise_kind == "cauchy":
        uniq, inverse = np.unique(R, axis=0, return_inverse=True)
        psi_rows = np.stack([psi_cauchy(row) for row in uniq])
        return psi_rows[inverse], 1
    raise ConfigurationError(
        f"training supports gaussian or cauchy risk mapping, not {noise_kind!r}")


def _per_sample_tstar(spec: SDESpec, deductions: np.ndarray, u_power: int):
    worst = deductions.max(axis=1)
    uniq, inverse = np.unique(worst, return_inverse=True)
    t_stars = np.empty_like(uniq)
    empties = np.empty(uniq.shape, dtype=bool)
    for i, c in enumerate(uniq):
        interval = stability_threshold_time(spec, float(c), u_power=u_power)
        t_stars[i] = interval.t_star
        empties[i] = interval.empty
    return t_stars[inverse], empties[inverse]


def train(model: ScoreModel, dataset: RiskDataset, spec: SDESpec, config: TrainConfig,
          noise_kind: str = "gaussian", cond_fn=None):
    """Run the minibatch training loop; returns ``(model, TrainingTrace)``.

    ``noise_kind`` selects how risk rows map to variance deductions.
    ``cond_fn(rng, idx) -> (batch, cond_dim)`` supplies conditioning inputs
    for conditional models; the forward kernel itself never depends on it.
    """
    if dataset.n == 0:
        raise InvalidArgumentError("dataset is empty")
    if dataset.dim != model.data_dim:
        raise InvalidArgumentError("dataset dimension does not match the model")
    X, R = dataset.X, dataset.R
    psi, u_power = _per_sample_deductions(R, noise_kind)
    t_star, empty = _per_sample_tstar(spec, psi, u_power)
    if config.p_force == 0.0 and bool(empty.all()):
        raise ConfigurationError(
            "every sample has an empty stability interval; raise the schedule's "
            "terminal noise level or set p_force > 0")

    rng = np.random.default_rng(config.seed)
    state = AdamState.for_model(model, learning_rate=config.learning_rate)
    delta = TIME_GUARD_FRACTION * spec.T
    losses = np.empty(config.steps)
    times = np.full(config.steps, np.nan)
    skipped = 0
    batch = config.batch_size
    scaled = model.sde is not None

    for step in range(config.steps):
        idx = rng.integers(0, dataset.n, size=batch)
        if config.p_force > 0:
            forced = rng.random(batch) < config.p_force
        else:
            forced = np.zeros(batch, dtype=bool)
        active = forced | ~empty[idx]
        lo = np.where(forced, 0.0, t_star[idx])
        lo = np.minimum(lo + delta, spec.T)
        t_b = lo + rng.random(batch) * (spec.T - lo)
        u = spec.u_of(t_b)
        v_sq = spec.v0_sq_of(t_b)[:, None] - (u**u_power)[:, None] * psi[idx]
        v = np.maximum(np.sqrt(np.maximum(v_sq, 0.0)), config.v_floor)
        eta = rng.standard_normal((batch, dataset.dim))
        x_t = u[:, None] * X[idx] + v * eta
        cond = cond_fn(rng, idx) if cond_fn is not None else None

        X_in, _ = model._assemble(x_t, t_b, cond)
        raw, cache = model.raw_forward(X_in, want_cache=True)
        if scaled:
            scale = model.score_scale(t_b)
            s = -raw / scale[:, None]
        else:
            s = raw
        resid = s + eta / v
        if config.lambda_schedule == "kernel_variance":
            lam = v * v
        else:
            lam = 1.0
        w = active.astype(np.float64)
        w_sum = float(w.sum())
        skipped += batch - int(active.sum())
        if w_sum == 0.0:
            losses[step] = 0.0
            continue
        weighted = w[:, None] * (lam * resid)
        loss = float(np.sum(weighted * resid) / w_sum)
        if not np.isfinite(loss):
            raise NumericalFailureError(f"non-finite loss at step {step}")
        d_s = 2.0 * weighted / w_sum
        d_raw = -d_s / scale[:, None] if scaled else d_s
        grads = model.backward(X_in, cache, d_raw)
        adam_step(model, grads, state)
        losses[step] = loss
        times[step] = float(t_b[active].mean())

    trace = TrainingTrace(losses=losses, times=times,
                          skipped_fraction=skipped / (config.steps * batch))
    return model, trace
