"""Evaluation metrics for generated sample sets.

Fréchet distance between Gaussian fits (with symmetric matrix square roots
via eigendecomposition), precision-recall curves from cluster histograms,
three-sigma coverage and component balance against a known mixture, and an
energy-distance permutation test used wherever two sample sets must be
declared distributionally equal.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.cluster import KMeans

from .datagen import MixtureSpec
from .errors import InvalidArgumentError
from .validation import as_matrix

_EIG_CLAMP_TOL = 1e-10


class ComponentBalance(NamedTuple):
    weights: np.ndarray
    max_deviation: float


@dataclass
class EvalReport:
    """Metric bundle produced by the evaluate stage."""

    frechet: float
    prd: np.ndarray
    three_sigma_coverage: float
    component_balance: ComponentBalance | None = None

    def to_dict(self) -> dict:
        out = {
            "frechet": self.frechet,
            "three_sigma_coverage": self.three_sigma_coverage,
            "prd": [[float(p), float(r)] for p, r in self.prd],
        }
        if self.component_balance is not None:
            out["component_weights"] = [float(w) for w in self.component_balance.weights]
            out["component_max_deviation"] = float(self.component_balance.max_deviation)
        return out


def _sym_sqrt(a: np.ndarray, context: str) -> np.ndarray:
    vals, vecs = np.linalg.eigh((a + a.T) / 2.0)
    scale = max(float(np.abs(vals).max()), 1e-300)
    if float(vals.min()) < _EIG_CLAMP_TOL * scale:
        warnings.warn(f"{context}: covariance rank-deficient beyond clamping tolerance "
                      f"(min eigenvalue {vals.min():.3e})", RuntimeWarning, stacklevel=3)
    vals = np.maximum(vals, 0.0)
    return (vecs * np.sqrt(vals)) @ vecs.T


def _mean_cov(x: np.ndarray):
    mu = x.mean(axis=0)
    cov = np.cov(x, rowvar=False)
    cov = np.atleast_2d(cov)
    return mu, cov


def frechet_distance(generated, reference) -> float:
    """2-Wasserstein distance between Gaussian fits of the two sets."""
    g = as_matrix(generated, "generated")
    r = as_matrix(reference, "reference", cols=g.shape[1])
    d = g.shape[1]
    if g.shape[0] < d + 1 or r.shape[0] < d + 1:
        raise InvalidArgumentError(f"need at least D+1={d + 1} samples per set")
    mu_g, cov_g = _mean_cov(g)
    mu_r, cov_r = _mean_cov(r)
    root_r = _sym_sqrt(cov_r, "reference")
    cross = _sym_sqrt(root_r @ cov_g @ root_r, "cross term")
    value = float(np.sum((mu_g - mu_r) ** 2) + np.trace(cov_g) + np.trace(cov_r)
                  - 2.0 * np.trace(cross))
    return max(value, 0.0)


def prd_curve(generated, reference, n_clusters: int = 20, n_angles: int = 1001,
              seed: int = 0, n_init: int = 10) -> np.ndarray:
    """Precision-recall pairs from cluster histograms, sorted by recall.

    Clusters the union with k-means, forms per-set histograms and sweeps the
    slope over an angular grid; the returned curve is the upper envelope
    (precision nonincreasing in recall).
    """
    g = as_matrix(generated, "generated")
    r = as_matrix(reference, "reference", cols=g.shape[1])
    if n_clusters < 2:
        raise InvalidArgumentError("need at least 2 clusters")
    union = np.vstack([r, g])
    km = KMeans(n_clusters=n_clusters, n_init=n_init, random_state=seed)
    labels = km.fit_predict(union)
    ref_hist = np.bincount(labels[: r.shape[0]], minlength=n_clusters).astype(np.float64)
    gen_hist = np.bincount(labels[r.shape[0]:], minlength=n_clusters).astype(np.float64)
    ref_hist = (ref_hist + 1e-10) / (ref_hist + 1e-10).sum()
    gen_hist = (gen_hist + 1e-10) / (gen_hist + 1e-10).sum()

    eps = 1e-10
    angles = np.linspace(eps, np.pi / 2 - eps, n_angles)
    slopes = np.tan(angles)
    precision = np.minimum(slopes[:, None] * ref_hist[None, :], gen_hist[None, :]).sum(axis=1)
    recall = precision / slopes

    order = np.argsort(recall, kind="stable")
    recall = recall[order]
    precision = precision[order]
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    return np.column_stack([precision, recall])


def recall_at_precision(curve: np.ndarray, precision_levels) -> np.ndarray:
    """Best recall achievable at each requested precision level."""
    precision = curve[:, 0]
    recall = curve[:, 1]
    order = np.argsort(precision, kind="stable")
    p_sorted = precision[order]
    r_sorted = recall[order]
    levels = np.atleast_1d(np.asarray(precision_levels, dtype=np.float64))
    return np.interp(levels, p_sorted, r_sorted, left=float(r_sorted[0]), right=0.0)


def mahalanobis_assignments(x: np.ndarray, mixture: MixtureSpec):
    """Nearest component (by Mahalanobis distance) and that squared distance."""
    x = as_matrix(x, "samples", cols=mixture.dim)
    all_d2 = np.empty((x.shape[0], mixture.n_components))
    for k in range(mixture.n_components):
        chol = np.linalg.cholesky(mixture.covariances[k])
        diff = x - mixture.means[k]
        y = np.linalg.solve(chol, diff.T)
        all_d2[:, k] = np.sum(y * y, axis=0)
    labels = np.argmin(all_d2, axis=1)
    return labels, all_d2[np.arange(x.shape[0]), labels]


def three_sigma_coverage(generated, mixture: MixtureSpec) -> float:
    """Fraction of samples within Mahalanobis distance 3 of some component."""
    _, d2 = mahalanobis_assignments(generated, mixture)
    return float(np.mean(d2 <= 9.0))


def tail_fraction(generated, mixture: MixtureSpec, radius: float) -> float:
    """Fraction of samples beyond the given Mahalanobis radius of every component."""
    _, d2 = mahalanobis_assignments(generated, mixture)
    return float(np.mean(d2 > radius * radius))


def component_balance(generated, mixture: MixtureSpec) -> ComponentBalance:
    """Empirical component weights under nearest-component assignment."""
    labels, _ = mahalanobis_assignments(generated, mixture)
    counts = np.bincount(labels, minlength=mixture.n_components).astype(np.float64)
    weights = counts / counts.sum()
    return ComponentBalance(weights=weights,
                            max_deviation=float(np.max(np.abs(weights - mixture.weights))))


# -- two-sample energy statistics -------------------------------------------


def energy_distance(x, y) -> float:
    """V-statistic energy distance ``2 E|X-Y| - E|X-X'| - E|Y-Y'|``."""
    x = as_matrix(x, "x")
    y = as_matrix(y, "y", cols=x.shape[1])
    dxy = cdist(x, y).mean()
    dxx = cdist(x, x).mean()
    dyy = cdist(y, y).mean()
    return float(2.0 * dxy - dxx - dyy)


def energy_test(x, y, n_permutations: int = 200, rng: np.random.Generator | None = None,
                max_points: int = 1000):
    """Permutation test on the energy distance; returns (statistic, p-value).

    Both sets are subsampled to ``max_points`` rows before the pooled
    distance matrix is formed.
    """
    rng = rng or np.random.default_rng(0)
    x = as_matrix(x, "x")
    y = as_matrix(y, "y", cols=x.shape[1])
    if x.shape[0] > max_points:
        x = x[rng.choice(x.shape[0], max_points, replace=False)]
    if y.shape[0] > max_points:
        y = y[rng.choice(y.shape[0], max_points, replace=False)]
    n, m = x.shape[0], y.shape[0]
    pooled = np.vstack([x, y])
    dist = cdist(pooled, pooled)
    total = float(dist.sum())

    def stat_for(indicator: np.ndarray) -> float:
        v = dist @ indicator
        s_xx = float(indicator @ v)
        s_xy = float(v.sum()) - s_xx
        s_yy = total - 2.0 * s_xy - s_xx
        return 2.0 * s_xy / (n * m) - s_xx / (n * n) - s_yy / (m * m)

    base = np.zeros(n + m)
    base[:n] = 1.0
    observed = stat_for(base)
    count = 0
    for _ in range(n_permutations):
        a = np.zeros(n + m)
        a[rng.permutation(n + m)[:n]] = 1.0
        if stat_for(a) >= observed:
            count += 1
    p_value = (1.0 + count) / (1.0 + n_permutations)
    return observed, p_value
