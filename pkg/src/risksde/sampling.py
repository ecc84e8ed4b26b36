"""Reverse-time Euler-Maruyama generation at zero risk.

Generation always runs the zero-risk backward process: starting from the
prior (standard normal for the contracting family, the terminal kernel
variance for the exploding one), each step evaluates the score model at the
current time, forms the backward drift ``f(t) x - g(0, t)^2 s(x, t)`` and
applies an Euler-Maruyama update with step noise of variance ``dt``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError
from .sde import SDESpec, diffusion, drift


@dataclass
class SamplerConfig:
    """Time discretization of the backward pass."""

    n_steps: int = 1000
    time_grid: np.ndarray | None = None

    def resolve_grid(self, spec: SDESpec) -> np.ndarray:
        if self.time_grid is not None:
            ts = np.asarray(self.time_grid, dtype=np.float64)
            if ts.ndim != 1 or ts.shape[0] < 1:
                raise InvalidArgumentError("time grid must be a nonempty vector")
            if ts.shape[0] > 1:
                if not np.all(np.diff(ts) < 0):
                    raise InvalidArgumentError("time grid must be strictly decreasing")
                if not (np.isclose(ts[0], spec.T) and np.isclose(ts[-1], 0.0)):
                    raise InvalidArgumentError("time grid must run from T down to 0")
            return ts
        if self.n_steps < 1:
            raise InvalidArgumentError("n_steps must be >= 1")
        if self.n_steps == 1:
            return np.array([spec.T])
        return np.linspace(spec.T, 0.0, self.n_steps)


def _as_score_fn(model):
    if callable(model):
        return model
    raise InvalidArgumentError("model must be callable as score(x, t)")


def prior_sample(spec: SDESpec, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw from the terminal marginal the backward pass starts from."""
    x = rng.standard_normal((n, spec.dim))
    if spec.family == "ve":
        x = x * np.sqrt(float(spec.v0_sq_of(spec.T)))
    return x


def reverse_sample(model, spec: SDESpec, config: SamplerConfig,
                   rng: np.random.Generator, n: int = 1) -> np.ndarray:
    """Generate ``n`` samples by integrating the zero-risk backward process.

    ``model`` is anything callable as ``score(x_batch, t) -> (n, D)``; a
    trained :class:`~risksde.nn.ScoreModel` qualifies.
    """
    score = _as_score_fn(model)
    ts = config.resolve_grid(spec)
    zero_risk = np.zeros(spec.dim)
    x = prior_sample(spec, rng, n)
    for k in range(len(ts) - 1):
        t_cur = float(ts[k])
        dt = t_cur - float(ts[k + 1])
        s = np.atleast_2d(score(x, t_cur))
        g = diffusion(spec, zero_risk, t_cur)
        f = drift(spec, t_cur)
        b_hat = f * x - (g * g) * s
        eta = np.sqrt(dt) * rng.standard_normal(x.shape)
        x = x - b_hat * dt - g * eta
        if not np.all(np.isfinite(x)):
            raise NumericalFailureError(f"non-finite state at backward step {k} (t={t_cur})")
    return x


def guided_reverse_sample(model, spec: SDESpec, config: SamplerConfig, guidance,
                          rng: np.random.Generator, n: int = 1) -> np.ndarray:
    """Backward pass with the score replaced by ``guidance.score(model, x, t)``."""
    def guided(x, t):
        return guidance.score(model, x, t)

    return reverse_sample(guided, spec, config, rng, n=n)
