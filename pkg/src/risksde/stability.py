"""Empirical estimation of the perturbation instability from samples.

The discrepancy between the forward marginals of risky and clean samples is
measured through their empirical characteristic functions: a weighted sum of
squared log-modulus differences plus principal-branch phase differences over
an evaluation grid. Two halves of one clean sample set calibrate the
detection threshold (the estimate is only used comparatively).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError
from .noise import NoiseModel, QuadratureGrid, psi_of, sample_noise
from .sde import SDESpec
from .validation import as_matrix

MODULUS_FLOOR = 0.05


@dataclass
class CharFnEstimate:
    """Empirical characteristic function values at selected points."""

    points: np.ndarray
    values: np.ndarray
    n_samples: int

    def modulus_bound(self) -> float:
        """Monte Carlo slack over the exact bound |chi| <= 1."""
        return 1.0 + 3.0 / np.sqrt(self.n_samples)


def empirical_charfn(samples, points) -> CharFnEstimate:
    """Average ``exp(i y^T x)`` over the sample set at each evaluation point."""
    x = as_matrix(samples, "samples")
    if x.shape[0] == 0:
        raise InvalidArgumentError("empty sample set")
    y = as_matrix(points, "points", cols=x.shape[1])
    phases = x @ y.T
    values = np.exp(1j * phases).mean(axis=0)
    return CharFnEstimate(points=y, values=values, n_samples=x.shape[0])


def charfn_scan_grid(samples, n_directions: int = 32, n_radii: int = 16,
                     rng: np.random.Generator | None = None,
                     radius_range: tuple = (0.25, 8.0)) -> QuadratureGrid:
    """Random directions times radii, scaled to the sample spread.

    Radii are expressed in units of the standard deviation along each
    direction, keeping the clean characteristic-function modulus above the
    evaluation floor over most of the grid. Full tensor grids would be
    infeasible at the dimensionalities this is used for.
    """
    x = as_matrix(samples, "samples")
    rng = rng or np.random.default_rng(0)
    d = x.shape[1]
    dirs = rng.standard_normal((n_directions, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    centered = x - x.mean(axis=0)
    scale = np.sqrt(np.maximum(np.mean((centered @ dirs.T) ** 2, axis=0), 1e-12))
    radii = np.linspace(radius_range[0], radius_range[1], n_radii)
    points = (dirs / scale[:, None])[:, None, :] * radii[None, :, None]
    points = points.reshape(-1, d)
    weights = np.full(points.shape[0], 1.0 / points.shape[0])
    return QuadratureGrid(points=points, weights=weights, kind="scan")


def _discrepancy(values_risky: np.ndarray, values_clean: np.ndarray,
                 weights: np.ndarray, modulus_floor: float) -> float:
    mod_clean = np.abs(values_clean)
    keep = mod_clean >= modulus_floor
    if not np.any(keep):
        raise NumericalFailureError("no grid nodes above the modulus floor")
    chi_r = values_risky[keep]
    chi_c = values_clean[keep]
    omega = mod_clean[keep]
    w = weights[keep]
    d_log = np.log(np.maximum(np.abs(chi_r), 1e-12)) - np.log(np.abs(chi_c))
    d_phase = np.angle(chi_r) - np.angle(chi_c)
    d_phase = np.mod(d_phase + np.pi, 2.0 * np.pi) - np.pi
    return float(np.sum(w * omega * (d_log**2 + d_phase**2)))


def instability(samples_risky, samples_clean, grid: QuadratureGrid,
                modulus_floor: float = MODULUS_FLOOR) -> float:
    """Weighted squared log-characteristic-function discrepancy.

    Nodes where the clean estimate's modulus falls below the floor are
    excluded from both terms; phase differences take the principal branch.
    """
    est_risky = empirical_charfn(samples_risky, grid.points)
    est_clean = empirical_charfn(samples_clean, grid.points)
    return _discrepancy(est_risky.values, est_clean.values, grid.weights, modulus_floor)


def bootstrap_threshold(samples_clean, grid: QuadratureGrid, n_bootstrap: int = 100,
                        quantile: float = 0.95,
                        rng: np.random.Generator | None = None,
                        modulus_floor: float = MODULUS_FLOOR) -> float:
    """Null threshold: quantile of the instability between two clean halves.

    The per-sample phase matrix is formed once; each bootstrap split only
    averages rows.
    """
    x = as_matrix(samples_clean, "samples_clean")
    rng = rng or np.random.default_rng(0)
    half = x.shape[0] // 2
    if half < 1:
        raise InvalidArgumentError("need at least two clean samples")
    per_sample = np.exp(1j * (x @ grid.points.T))
    values = np.empty(n_bootstrap)
    for b in range(n_bootstrap):
        perm = rng.permutation(x.shape[0])
        vals_a = per_sample[perm[:half]].mean(axis=0)
        vals_b = per_sample[perm[half: 2 * half]].mean(axis=0)
        values[b] = _discrepancy(vals_a, vals_b, grid.weights, modulus_floor)
    return float(np.quantile(values, quantile))


def instability_scan(spec: SDESpec, x0_clean: np.ndarray, noise: NoiseModel,
                     t_values, rng: np.random.Generator,
                     adjusted: bool = True, n_bootstrap: int = 100):
    """Estimate the instability of the forward marginals over a time grid.

    For each time: clean draws go through the risk-unaware kernel, corrupted
    draws (clean plus one noise draw each) through the risk-adjusted kernel
    (or the unadjusted one when ``adjusted`` is False), and the clean set
    calibrates the detection threshold. Returns rows of
    ``(t, estimate, threshold)``.
    """
    x0 = as_matrix(x0_clean, "x0_clean", cols=spec.dim)
    eps = sample_noise(noise, rng, n=x0.shape[0])
    x0_risky = x0 + eps
    rows = []
    for t in np.atleast_1d(np.asarray(t_values, dtype=np.float64)):
        u = float(spec.u_of(t))
        v0 = np.sqrt(max(float(spec.v0_sq_of(t)), 0.0))
        clean_t = u * x0 + v0 * rng.standard_normal(x0.shape)
        if adjusted:
            v_sq = np.maximum(float(spec.v0_sq_of(t)) - psi_of(noise, u), 0.0)
        else:
            v_sq = np.full(spec.dim, float(spec.v0_sq_of(t)))
        v = np.sqrt(v_sq)
        risky_t = u * x0_risky + v * rng.standard_normal(x0.shape)
        grid = charfn_scan_grid(clean_t, rng=rng)
        # one phase matrix serves the estimate and every bootstrap split
        per_sample = np.exp(1j * (clean_t @ grid.points.T))
        clean_vals = per_sample.mean(axis=0)
        risky_vals = empirical_charfn(risky_t, grid.points).values
        estimate = _discrepancy(risky_vals, clean_vals, grid.weights, MODULUS_FLOOR)
        half = clean_t.shape[0] // 2
        boot_rng = np.random.default_rng(rng.integers(2**63))
        boots = np.empty(n_bootstrap)
        for b in range(n_bootstrap):
            perm = boot_rng.permutation(clean_t.shape[0])
            boots[b] = _discrepancy(per_sample[perm[:half]].mean(axis=0),
                                    per_sample[perm[half: 2 * half]].mean(axis=0),
                                    grid.weights, MODULUS_FLOOR)
        threshold = float(np.quantile(boots, 0.95))
        rows.append((float(t), estimate, threshold))
    return rows
