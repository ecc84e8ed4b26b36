"""Corruption distributions and the variance deduction they induce.

For a zero-mean corruption with characteristic function ``chi_r`` the
risk-adjusted noise level is ``v(r, t)^2 = max(v0(t)^2 - Psi(u(t), r), 0)``
where, for a positive weight ``Omega``,

    Psi(u, r) = -2 * (int Omega(y) [y y^T]^2 dy)^(-1)
                   @ (int Omega(y) ln|chi_r(u * y)| [y]^2 dy).

Gaussian corruption has the closed form ``Psi = r^2 * u^2`` (independent of
``Omega``); independent per-coordinate Cauchy corruption with scales ``r``
and the weight ``Omega = |chi_r|`` has a closed-form linear system solved by
:func:`psi_cauchy`, entering with a single power of ``u``; anything else goes
through :func:`psi_numeric` on a quadrature grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, InternalError, NumericalFailureError
from .sde import RiskCoefficients, SDESpec, StabilityInterval, stability_threshold_time
from .validation import as_vector, check_time

_LOG_FLOOR = np.log(1e-300)
_OMEGA_THRESHOLD = 1e-14
_OMEGA_EDGE = 1e-12
_COND_LIMIT = 1e12


def gaussian_envelope(scale: float = 1.0):
    """Default quadrature weight ``Omega(y) = exp(-0.5 * scale^2 * ||y||^2)``."""
    s2 = float(scale) ** 2

    def omega(Y: np.ndarray) -> np.ndarray:
        Y = np.atleast_2d(Y)
        return np.exp(-0.5 * s2 * np.sum(Y * Y, axis=1))

    return omega


@dataclass
class NoiseModel:
    """A corruption distribution parameterized by a per-entry risk vector.

    ``kind`` is one of ``gaussian`` (std devs ``r``), ``cauchy`` (scales
    ``r``) or ``custom`` (characteristic-function callback plus sampler).
    Zero risk entries leave the coordinate uncorrupted. Only zero-centered
    corruption is supported; a nonzero ``center`` is rejected because offset
    noise admits no stable adjustment.
    """

    kind: str
    r: np.ndarray
    center: float = 0.0
    charfn: object = None
    sampler: object = None
    omega: object = None
    grid: "QuadratureGrid | None" = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "cauchy", "custom"):
            raise InvalidArgumentError(f"unknown noise kind {self.kind!r}")
        self.r = as_vector(self.r, "r", nonnegative=True)
        if self.center != 0.0:
            raise InvalidArgumentError("only zero-centered corruption is supported")
        if self.kind == "custom" and (self.charfn is None or self.sampler is None):
            raise InvalidArgumentError("custom noise needs charfn and sampler callbacks")

    @property
    def dim(self) -> int:
        return self.r.shape[0]

    def characteristic(self, Y) -> np.ndarray:
        """chi_r(y) on rows of Y; |chi| <= 1 and chi(0) = 1."""
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        if self.kind == "gaussian":
            return np.exp(-0.5 * np.sum((self.r**2) * Y * Y, axis=1)).astype(complex)
        if self.kind == "cauchy":
            return np.exp(-np.sum(self.r * np.abs(Y), axis=1)).astype(complex)
        return np.asarray(self.charfn(Y), dtype=complex)

    def log_abs_characteristic(self, Y) -> np.ndarray:
        """ln |chi_r(y)|, clamped below to keep quadrature finite."""
        Y = np.atleast_2d(np.asarray(Y, dtype=np.float64))
        if self.kind == "gaussian":
            vals = -0.5 * np.sum((self.r**2) * Y * Y, axis=1)
        elif self.kind == "cauchy":
            vals = -np.sum(self.r * np.abs(Y), axis=1)
        else:
            vals = np.log(np.maximum(np.abs(self.charfn(Y)), 1e-300))
        return np.maximum(vals, _LOG_FLOOR)


def sample_noise(model: NoiseModel, rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Draw corruption vectors; a single (D,) draw when ``n`` is None."""
    size = 1 if n is None else int(n)
    if model.kind == "gaussian":
        eps = model.r * rng.standard_normal((size, model.dim))
    elif model.kind == "cauchy":
        u = rng.random((size, model.dim))
        eps = model.r * np.tan(np.pi * (u - 0.5))
    else:
        eps = np.asarray(model.sampler(rng, size), dtype=np.float64)
        if eps.shape != (size, model.dim):
            raise InvalidArgumentError(
                f"custom sampler returned shape {eps.shape}, expected {(size, model.dim)}")
    return eps[0] if n is None else eps


def psi_gaussian(r, u: float) -> np.ndarray:
    """Variance deduction for Gaussian corruption: ``r^2 * u^2`` entrywise."""
    r = as_vector(r, "r", nonnegative=True)
    return (r**2) * float(u) ** 2


def psi_cauchy(r) -> np.ndarray:
    """Base variance deduction for per-coordinate Cauchy corruption.

    Solves the normal-equation system ``M psi = b`` with
    ``M = r^-2 (r^-2)^T + diag(5 r^-4)`` and ``b = (d + 2) r^-2`` over the
    ``d`` coordinates with positive risk; zero-risk coordinates need no
    adjustment and get 0. The time-dependent deduction is this vector times
    a single power of the kernel scale u(t).
    """
    r = as_vector(r, "r", nonnegative=True)
    psi = np.zeros_like(r)
    active = r > 0
    d = int(active.sum())
    if d == 0:
        return psi
    ra = r[active]
    inv2 = ra**-2.0
    M = np.outer(inv2, inv2) + np.diag(5.0 * ra**-4.0)
    b = (d + 2.0) * inv2
    if not np.all(np.isfinite(M)):
        raise InternalError("Cauchy deduction system is not finite")
    try:
        sol = np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:  # positive definite for r > 0
        raise InternalError("Cauchy deduction system is singular") from exc
    psi[active] = sol
    return psi


@dataclass
class QuadratureGrid:
    """Integration nodes for the deduction integrals.

    ``points`` has shape (N, D); ``weights`` already carry the quadrature
    weight times ``Omega`` for tensor grids, or ``1/N`` for importance
    samples drawn proportional to ``Omega`` (the unknown normalizer cancels
    in the linear solve).
    """

    points: np.ndarray
    weights: np.ndarray
    kind: str = "tensor"

    def __post_init__(self):
        if np.any(self.weights < 0):
            raise InvalidArgumentError("grid weights must be positive")
        if not np.all(np.isfinite(self.weights)) or not np.isfinite(self.weights.sum()):
            raise InvalidArgumentError("grid weights must be finite")

    @staticmethod
    def _find_half_width(omega, dim: int, axis: int) -> float:
        def val(L: float) -> float:
            e = np.zeros((1, dim))
            e[0, axis] = L
            return float(omega(e)[0])

        lo, hi = 0.0, 1.0
        for _ in range(60):
            if val(hi) < _OMEGA_EDGE:
                break
            lo, hi = hi, hi * 2.0
        else:
            raise NumericalFailureError("weight function does not decay along an axis")
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            if val(mid) < _OMEGA_EDGE:
                hi = mid
            else:
                lo = mid
        return hi

    @classmethod
    def gauss_legendre(cls, omega, dim: int, n_nodes: int = 129,
                       half_width=None, split_at_zero: bool = True) -> "QuadratureGrid":
        """Tensor-product Gauss-Legendre grid on [-L, L]^D.

        ``half_width`` may be a scalar, a per-dimension sequence, or None to
        probe each axis for the point where ``Omega`` drops below 1e-12.
        With ``split_at_zero`` the per-dimension nodes are laid out as two
        panels meeting at 0, which keeps the rule accurate for weight
        functions with a kink at the origin (e.g. heavy-tailed
        characteristic-function magnitudes). Tensor products are practical
        up to D = 3; use ``monte_carlo`` beyond.
        """
        if dim > 3:
            raise InvalidArgumentError("tensor grids limited to dim <= 3; use monte_carlo")
        if half_width is None:
            widths = [cls._find_half_width(omega, dim, j) for j in range(dim)]
        else:
            hw = np.broadcast_to(np.asarray(half_width, dtype=np.float64), (dim,))
            widths = [float(x) for x in hw]
        if split_at_zero:
            n_neg = n_nodes // 2
            n_pos = n_nodes - n_neg
            xn, wn = np.polynomial.legendre.leggauss(n_neg)
            xp, wp = np.polynomial.legendre.leggauss(n_pos)
            # map [-1, 1] onto [-1, 0] and [0, 1]
            nodes = np.concatenate([(xn - 1.0) / 2.0, (xp + 1.0) / 2.0])
            wts = np.concatenate([wn / 2.0, wp / 2.0])
        else:
            nodes, wts = np.polynomial.legendre.leggauss(n_nodes)
        axes = [nodes * L for L in widths]
        axis_w = [wts * L for L in widths]
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([m.ravel() for m in mesh], axis=1)
        wmesh = np.meshgrid(*axis_w, indexing="ij")
        w = np.ones(points.shape[0])
        for m in wmesh:
            w = w * m.ravel()
        w = w * omega(points)
        keep = w > _OMEGA_THRESHOLD * max(float(w.max()), 1e-300)
        return cls(points=points[keep], weights=w[keep], kind="tensor")

    @classmethod
    def monte_carlo(cls, sampler, n: int = 1_000_000,
                    rng: np.random.Generator | None = None) -> "QuadratureGrid":
        """Importance grid: ``sampler(rng, n)`` draws points proportional to Omega."""
        rng = rng or np.random.default_rng(0)
        pts = np.asarray(sampler(rng, int(n)), dtype=np.float64)
        return cls(points=pts, weights=np.full(pts.shape[0], 1.0 / pts.shape[0]),
                   kind="monte-carlo")


def psi_numeric(charfn, u: float, grid: QuadratureGrid) -> np.ndarray:
    """Quadrature evaluation of the variance deduction.

    ``charfn`` is either a :class:`NoiseModel` or a callable returning the
    complex characteristic function on rows of its (N, D) argument. Assembles
    the fourth-moment matrix ``M_ij = sum w y_i^2 y_j^2`` and right-hand side
    ``b_i = -2 sum w ln|chi(u * y)| y_i^2`` and returns ``M^-1 b``; Gaussian
    input yields ``+ r^2 u^2``.
    """
    Y = grid.points
    w = grid.weights
    if isinstance(charfn, NoiseModel):
        ln_abs = charfn.log_abs_characteristic(float(u) * Y)
    else:
        vals = np.asarray(charfn(float(u) * Y), dtype=complex)
        ln_abs = np.maximum(np.log(np.maximum(np.abs(vals), 1e-300)), _LOG_FLOOR)
    Y2 = Y * Y
    M = (w[:, None] * Y2).T @ Y2
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > _COND_LIMIT:
        raise NumericalFailureError(
            f"moment matrix ill-conditioned (cond={cond:.3e}); widen or refine the grid")
    b = -2.0 * ((w * ln_abs) @ Y2)
    return np.linalg.solve(M, b)


def psi_base(noise: NoiseModel) -> tuple[np.ndarray, int] | None:
    """Time-independent deduction and the power of u(t) applying to it.

    Gaussian: ``(r^2, 2)``; Cauchy: ``(psi_cauchy(r), 1)``. Custom noise has
    no separable form and returns None (evaluate per time instead).
    """
    if noise.kind == "gaussian":
        return noise.r**2, 2
    if noise.kind == "cauchy":
        return psi_cauchy(noise.r), 1
    return None


def _default_grid(noise: NoiseModel) -> QuadratureGrid:
    if noise.grid is None:
        omega = noise.omega or gaussian_envelope(1.0)
        noise.grid = QuadratureGrid.gauss_legendre(omega, noise.dim)
    return noise.grid


def psi_of(noise: NoiseModel, u: float) -> np.ndarray:
    """Deduction vector Psi(u, r) for any noise kind."""
    base = psi_base(noise)
    if base is not None:
        vec, power = base
        return vec * float(u) ** power
    return psi_numeric(noise, u, _default_grid(noise))


def general_risk_coefficients(spec: SDESpec, noise: NoiseModel, t: float) -> RiskCoefficients:
    """Risk-adjusted kernel coefficients for an arbitrary corruption model."""
    t = check_time(t, spec.T)
    if noise.dim != spec.dim:
        raise InvalidArgumentError("noise dimension does not match the SDE")
    u = float(spec.u_of(t))
    v0_sq = float(spec.v0_sq_of(t))
    deduction = psi_of(noise, u)
    deficit = v0_sq - deduction
    stable = deficit >= 0.0
    v = np.sqrt(np.maximum(deficit, 0.0))
    return RiskCoefficients(u=np.full(noise.dim, u), v=v, stable=stable)


def general_stability_interval(spec: SDESpec, noise: NoiseModel) -> StabilityInterval:
    """Scalar stability interval gated on the worst-entry deduction."""
    base = psi_base(noise)
    if base is not None:
        vec, power = base
        return stability_threshold_time(spec, float(np.max(vec, initial=0.0)), u_power=power)
    # custom noise: bisect on the monotone worst-entry margin
    def margin(t: float) -> float:
        u = float(spec.u_of(t))
        return float(spec.v0_sq_of(t)) - float(np.max(psi_of(noise, u)))

    if margin(spec.T) < 0.0:
        return StabilityInterval(t_star=spec.T, upper=spec.T, empty=True)
    if margin(0.0) >= 0.0:
        return StabilityInterval(t_star=0.0, upper=spec.T)
    lo, hi = 0.0, spec.T
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if margin(mid) >= 0.0:
            hi = mid
        else:
            lo = mid
    return StabilityInterval(t_star=hi, upper=spec.T)
