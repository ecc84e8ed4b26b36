"""Base diffusion schedules and the risk-adjusted coefficient algebra.

Two schedule families are provided:

* ``vp`` — contracting drift with a linear noise rate
  ``beta(t) = beta_min + (beta_max - beta_min) * t / T``, scale
  ``u(t) = exp(-0.5 * int_0^t beta)`` and clean noise level
  ``v0(t)^2 = 1 - u(t)^2``.
* ``ve`` — zero drift with a geometric noise scale
  ``sigma(t) = sigma_min * (sigma_max / sigma_min)^(t/T)``, ``u(t) = 1`` and
  ``v0(t)^2 = sigma(t)^2 - sigma(0)^2``.

For a sample annotated with a nonnegative per-entry risk vector ``r`` the
risk-adjusted noise level is ``v(r, t)^2 = max(v0(t)^2 - r^2 * u(t)^2, 0)``.
An entry is *stable* at time ``t`` when the max does not clip; on the stable
set the diffusion coefficient equals the base one and the corrupted sample's
forward marginal coincides with the clean one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .validation import as_vector, check_positive, check_time

_BISECT_TOL = 1e-9


@dataclass(frozen=True)
class SDESpec:
    """Configuration of a base diffusion process."""

    family: str = "vp"
    T: float = 1.0
    beta_min: float = 0.1
    beta_max: float = 20.0
    sigma_min: float = 0.01
    sigma_max: float = 50.0
    dim: int = 2

    def __post_init__(self):
        if self.family not in ("vp", "ve"):
            raise InvalidArgumentError(f"unknown SDE family {self.family!r}")
        check_positive(self.T, "T")
        if self.dim < 1:
            raise InvalidArgumentError("dim must be >= 1")
        if self.family == "vp":
            if self.beta_min <= 0 or self.beta_max <= 0:
                raise InvalidArgumentError("beta(t) must stay positive on [0, T]")
        else:
            if not (0 < self.sigma_min < self.sigma_max):
                raise InvalidArgumentError("ve requires 0 < sigma_min < sigma_max")

    # -- schedule primitives (vectorized over t) --

    def beta(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.beta_min + (self.beta_max - self.beta_min) * t / self.T

    def int_beta(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.beta_min * t + (self.beta_max - self.beta_min) * t * t / (2.0 * self.T)

    def sigma(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.sigma_min * (self.sigma_max / self.sigma_min) ** (t / self.T)

    def u_of(self, t):
        """Scale factor of the forward kernel mean."""
        if self.family == "vp":
            return np.exp(-0.5 * self.int_beta(t))
        return np.ones_like(np.asarray(t, dtype=np.float64))

    def v0_sq_of(self, t):
        """Squared clean noise level of the forward kernel."""
        if self.family == "vp":
            return -np.expm1(-self.int_beta(t))
        return self.sigma(t) ** 2 - self.sigma_min**2

    def drift_of(self, t):
        if self.family == "vp":
            return -0.5 * self.beta(t)
        return np.zeros_like(np.asarray(t, dtype=np.float64))

    def base_diffusion_sq_of(self, t):
        if self.family == "vp":
            return self.beta(t)
        return self.sigma(t) ** 2 * (2.0 * np.log(self.sigma_max / self.sigma_min) / self.T)


@dataclass(frozen=True)
class RiskCoefficients:
    """Forward-kernel coefficients for one (risk, time) pair.

    ``u`` and ``v`` are the per-entry kernel scale and standard deviation;
    ``stable`` marks the entries for which the risk deduction did not clip,
    i.e. ``u^2 * r^2 + v^2 == v0^2`` holds exactly.
    """

    u: np.ndarray
    v: np.ndarray
    stable: np.ndarray


@dataclass(frozen=True)
class StabilityInterval:
    """Scalar stability interval ``[t_star, upper]`` (empty when degenerate)."""

    t_star: float
    upper: float
    empty: bool = False

    @property
    def length(self) -> float:
        return 0.0 if self.empty else self.upper - self.t_star


def base_schedules(spec: SDESpec, t: float) -> tuple[float, float]:
    """Return ``(u(t), v0(t)^2)`` of the risk-unaware kernel."""
    t = check_time(t, spec.T)
    return float(spec.u_of(t)), float(spec.v0_sq_of(t))


def risk_coefficients(spec: SDESpec, r, t: float) -> RiskCoefficients:
    """Risk-adjusted kernel coefficients at time ``t``."""
    r = as_vector(r, "r", dim=None, nonnegative=True)
    if r.shape[0] == 1 and spec.dim > 1:
        r = np.full(spec.dim, r[0])
    t = check_time(t, spec.T)
    u = float(spec.u_of(t))
    v0_sq = float(spec.v0_sq_of(t))
    deficit = v0_sq - (r**2) * u**2
    stable = deficit >= 0.0
    v = np.sqrt(np.maximum(deficit, 0.0))
    return RiskCoefficients(u=np.full(r.shape[0], u), v=v, stable=stable)


def drift(spec: SDESpec, t: float) -> float:
    """Per-entry drift coefficient (risk-independent)."""
    t = check_time(t, spec.T)
    return float(spec.drift_of(t))


def diffusion(spec: SDESpec, r, t: float) -> np.ndarray:
    """Per-entry diffusion coefficient: base value on stable entries, 0 elsewhere.

    The stable set uses the non-strict inequality, matching the right
    derivative of the clipped squared noise level at the kink.
    """
    coeffs = risk_coefficients(spec, r, t)
    g0 = np.sqrt(float(spec.base_diffusion_sq_of(t)))
    return np.where(coeffs.stable, g0, 0.0)


def _solve_int_beta(spec: SDESpec, target: float) -> float:
    """Least t with ``int_0^t beta = target`` for the linear-beta schedule."""
    a = (spec.beta_max - spec.beta_min) / (2.0 * spec.T)
    b = spec.beta_min
    if a > 0:
        return (-b + np.sqrt(b * b + 4.0 * a * target)) / (2.0 * a)
    if a == 0:
        return target / b
    return _bisect_tstar(lambda t: spec.int_beta(t) - target, spec.T)


def _bisect_tstar(h, T: float) -> float:
    """Least t in [0, T] with h(t) >= 0 for nondecreasing h; assumes h(T) >= 0."""
    lo, hi = 0.0, T
    while hi - lo > _BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if h(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    return hi


def stability_threshold_time(spec: SDESpec, deduction: float, u_power: int = 2) -> StabilityInterval:
    """Interval of times with ``v0(t)^2 >= deduction * u(t)^u_power``.

    ``deduction`` is the worst-entry variance deduction (``max_j r_j^2`` for
    Gaussian corruption). Schedule monotonicity makes the stable set an
    up-set of ``[0, T]``, so the interval is ``[t_star, T]``.
    """
    if deduction < 0:
        raise InvalidArgumentError("deduction must be nonnegative")
    if deduction == 0.0:
        return StabilityInterval(t_star=0.0, upper=spec.T)
    if spec.family == "ve":
        # u == 1: sigma(t)^2 - sigma_min^2 >= deduction
        ratio = 1.0 + deduction / spec.sigma_min**2
        t_star = spec.T * np.log(ratio) / (2.0 * np.log(spec.sigma_max / spec.sigma_min))
    elif u_power == 2:
        # 1 - alpha >= deduction * alpha  <=>  int beta >= ln(1 + deduction)
        t_star = _solve_int_beta(spec, np.log1p(deduction))
    elif u_power == 1:
        # 1 - alpha >= deduction * sqrt(alpha); quadratic in sqrt(alpha)
        s = (-deduction + np.sqrt(deduction * deduction + 4.0)) / 2.0
        t_star = _solve_int_beta(spec, -2.0 * np.log(s))
    else:
        h = lambda t: spec.v0_sq_of(t) - deduction * spec.u_of(t) ** u_power
        if h(spec.T) < 0.0:
            return StabilityInterval(t_star=spec.T, upper=spec.T, empty=True)
        t_star = _bisect_tstar(h, spec.T)
    if t_star > spec.T:
        return StabilityInterval(t_star=spec.T, upper=spec.T, empty=True)
    return StabilityInterval(t_star=float(t_star), upper=spec.T)


def stability_interval(spec: SDESpec, r) -> StabilityInterval:
    """Stability interval for Gaussian corruption with risk vector ``r``."""
    r = as_vector(r, "r", nonnegative=True)
    return stability_threshold_time(spec, float(np.max(r) ** 2), u_power=2)


def forward_kernel_sample(spec: SDESpec, r, t: float, x0, rng: np.random.Generator) -> np.ndarray:
    """Draw ``u(t) * x0 + v(r, t) * eta`` with standard normal ``eta``."""
    x0 = as_vector(x0, "x0")
    coeffs = risk_coefficients(spec, r if np.ndim(r) else np.full(x0.shape[0], r), t)
    if coeffs.v.shape[0] != x0.shape[0]:
        raise InvalidArgumentError("x0 and r dimensions differ")
    eta = rng.standard_normal(x0.shape[0])
    return coeffs.u * x0 + coeffs.v * eta


def forward_kernel_sample_batch(
    spec: SDESpec, R: np.ndarray, t, X0: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Vectorized forward-kernel draw; one time per row when ``t`` is a vector."""
    X0 = np.asarray(X0, dtype=np.float64)
    R = np.asarray(R, dtype=np.float64)
    t_arr = np.broadcast_to(np.asarray(t, dtype=np.float64), (X0.shape[0],))
    u = spec.u_of(t_arr)
    v_sq = spec.v0_sq_of(t_arr)[:, None] - (R**2) * (u**2)[:, None]
    v = np.sqrt(np.maximum(v_sq, 0.0))
    eta = rng.standard_normal(X0.shape)
    return u[:, None] * X0 + v * eta
