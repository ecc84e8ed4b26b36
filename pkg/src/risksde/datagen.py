"""Synthetic benchmarks and the tabular missing-value pipeline.

The mixture generator produces (sample, risk) pairs: each draw picks a
component, then with that component's corruption probability adds noise of
the configured law and annotates the sample with the noise scale as its risk
vector; clean draws carry zero risk and are bit-identical to the underlying
component sample.

The tabular pipeline manufactures risk annotations from real tables: masked
cells are imputed with the median of the k nearest rows (distances over
mutually observed columns, rescaled by D / #observed) and the absolute median
deviation of the neighbor values becomes the per-cell risk.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError
from .validation import as_matrix, as_vector


class RiskSample(NamedTuple):
    x0: np.ndarray
    r: np.ndarray
    clean: bool


@dataclass
class RiskDataset:
    """Sample matrix X (n, D) with an equal-shape nonnegative risk matrix R."""

    X: np.ndarray
    R: np.ndarray

    def __post_init__(self):
        self.X = as_matrix(self.X, "X")
        self.R = as_matrix(self.R, "R", cols=self.X.shape[1])
        if self.R.shape[0] != self.X.shape[0]:
            raise InvalidArgumentError("X and R row counts differ")
        if np.any(self.R < 0):
            raise InvalidArgumentError("risks must be nonnegative")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def clean_mask(self) -> np.ndarray:
        return ~np.any(self.R > 0, axis=1)

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> RiskSample:
        r = self.R[i]
        return RiskSample(self.X[i], r, bool(not np.any(r > 0)))

    def with_zero_risk(self) -> "RiskDataset":
        return RiskDataset(self.X, np.zeros_like(self.R))


@dataclass(frozen=True)
class MixtureSpec:
    """A Gaussian mixture with per-component corruption probabilities."""

    means: np.ndarray
    covariances: np.ndarray
    weights: np.ndarray
    corrupt_fractions: np.ndarray
    noise_kind: str = "gaussian"
    risk_value: float = 1.0
    risk_range: tuple | None = None

    def __post_init__(self):
        means = as_matrix(self.means, "means")
        object.__setattr__(self, "means", means)
        cov = np.asarray(self.covariances, dtype=np.float64)
        k, d = means.shape
        if cov.ndim == 0:
            cov = np.stack([np.eye(d) * float(cov)] * k)
        elif cov.ndim == 2:
            cov = np.stack([cov] * k)
        if cov.shape != (k, d, d):
            raise InvalidArgumentError(f"covariances must have shape {(k, d, d)}")
        for c in cov:
            if not np.allclose(c, c.T):
                raise InvalidArgumentError("covariances must be symmetric")
            if np.any(np.linalg.eigvalsh(c) <= 0):
                raise InvalidArgumentError("covariances must be positive definite")
        object.__setattr__(self, "covariances", cov)
        w = as_vector(self.weights, "weights", dim=k, nonnegative=True)
        if not np.isclose(w.sum(), 1.0):
            raise InvalidArgumentError("weights must sum to 1")
        object.__setattr__(self, "weights", w)
        f = as_vector(self.corrupt_fractions, "corrupt_fractions", dim=k)
        if np.any(f < 0) or np.any(f > 1):
            raise InvalidArgumentError("corruption fractions must lie in [0, 1]")
        object.__setattr__(self, "corrupt_fractions", f)
        if self.noise_kind not in ("gaussian", "cauchy"):
            raise InvalidArgumentError(f"unknown corruption law {self.noise_kind!r}")

    @property
    def n_components(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @classmethod
    def four_component_benchmark(cls, noise_kind: str = "gaussian",
                                 risk_value: float = 1.0,
                                 upper_right_fraction: float = 0.95,
                                 other_fraction: float = 0.1,
                                 covariance: float = 0.5) -> "MixtureSpec":
        """Equal-weight components at (+-4, +-4); the upper-right one is mostly noisy."""
        means = np.array([[4.0, 4.0], [-4.0, 4.0], [-4.0, -4.0], [4.0, -4.0]])
        fr = np.array([upper_right_fraction] + [other_fraction] * 3)
        return cls(means=means, covariances=covariance, weights=np.full(4, 0.25),
                   corrupt_fractions=fr, noise_kind=noise_kind, risk_value=risk_value)


def sample_mixture_clean(spec: MixtureSpec, n: int, rng: np.random.Generator):
    """Draw clean mixture samples; returns (X, component labels)."""
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    labels = rng.choice(spec.n_components, size=n, p=spec.weights)
    X = np.empty((n, spec.dim))
    for k in range(spec.n_components):
        idx = np.flatnonzero(labels == k)
        if idx.size == 0:
            continue
        chol = np.linalg.cholesky(spec.covariances[k])
        X[idx] = spec.means[k] + rng.standard_normal((idx.size, spec.dim)) @ chol.T
    return X, labels


def generate_mixture(spec: MixtureSpec, n: int, rng: np.random.Generator) -> RiskDataset:
    """Draw n (sample, risk) pairs from the corrupted mixture benchmark."""
    X, labels = sample_mixture_clean(spec, n, rng)
    corrupted = rng.random(n) < spec.corrupt_fractions[labels]
    R = np.zeros_like(X)
    m = int(corrupted.sum())
    if m:
        if spec.risk_range is not None:
            lo, hi = spec.risk_range
            scales = rng.uniform(lo, hi, size=m)
        else:
            scales = np.full(m, spec.risk_value)
        Rc = np.repeat(scales[:, None], spec.dim, axis=1)
        if spec.noise_kind == "gaussian":
            eps = Rc * rng.standard_normal((m, spec.dim))
        else:
            eps = Rc * np.tan(np.pi * (rng.random((m, spec.dim)) - 0.5))
        X = X.copy()
        X[corrupted] += eps
        R[corrupted] = Rc
    return RiskDataset(X=X, R=R)


@dataclass(frozen=True)
class TabularPipelineSpec:
    """Masking rate and neighborhood size of the missing-value pipeline."""

    mask_fraction: float = 0.05
    n_neighbors: int = 10

    def __post_init__(self):
        if not (0.0 < self.mask_fraction < 1.0):
            raise InvalidArgumentError("mask_fraction must lie in (0, 1)")
        if self.n_neighbors < 1:
            raise InvalidArgumentError("n_neighbors must be >= 1")


def mask_table(table: np.ndarray, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Blank out cells i.i.d. at the given rate (NaN marks missing)."""
    if not (0.0 < fraction < 1.0):
        raise InvalidArgumentError("fraction must lie in (0, 1)")
    table = as_matrix(table, "table", allow_nan=True).copy()
    mask = rng.random(table.shape) < fraction
    table[mask] = np.nan
    return table


def knn_impute_with_risk(table: np.ndarray, spec: TabularPipelineSpec) -> RiskDataset:
    """Impute missing cells by neighborhood medians and derive per-cell risk.

    For each missing cell (i, c): rank other rows with column c observed by
    Euclidean distance over mutually observed columns (squared distance
    rescaled by D / #mutual), take the k nearest, impute the median of their
    column-c values, and set the risk at (i, c) to the median absolute
    deviation of those values around the imputed one. Observed cells keep
    risk 0.
    """
    table = as_matrix(table, "table", allow_nan=True)
    n, d = table.shape
    observed = ~np.isnan(table)
    if np.any(~observed.any(axis=0)):
        col = int(np.flatnonzero(~observed.any(axis=0))[0])
        raise ConfigurationError(f"column {col} has no observed values")
    if np.any(~observed.any(axis=1)):
        row = int(np.flatnonzero(~observed.any(axis=1))[0])
        raise InvalidArgumentError(f"row {row} has no observed entries")

    Xm = np.where(observed, table, 0.0)
    # pairwise squared distances over mutual observations, scaled by d/m
    obs_f = observed.astype(np.float64)
    cross = Xm @ Xm.T
    sq_i = (Xm * Xm) @ obs_f.T
    d2 = sq_i + sq_i.T - 2.0 * cross
    mutual = obs_f @ obs_f.T
    with np.errstate(divide="ignore", invalid="ignore"):
        d2 = np.where(mutual > 0, d2 * (d / mutual), np.inf)
    np.fill_diagonal(d2, np.inf)

    imputed = table.copy()
    risk = np.zeros_like(table)
    k = spec.n_neighbors
    for i, c in zip(*np.nonzero(~observed)):
        candidates = np.flatnonzero(observed[:, c] & np.isfinite(d2[i]))
        if candidates.size < 1:
            raise ConfigurationError(f"no usable neighbors for cell ({i}, {c})")
        order = candidates[np.argsort(d2[i, candidates], kind="stable")][:k]
        values = table[order, c]
        med = float(np.median(values))
        imputed[i, c] = med
        risk[i, c] = float(np.median(np.abs(values - med)))
    return RiskDataset(X=imputed, R=risk)


# -- CSV interchange -------------------------------------------------------


def write_dataset_csv(path, dataset: RiskDataset) -> None:
    """Write x_1..x_D, r_1..r_D columns."""
    d = dataset.dim
    header = [f"x_{j + 1}" for j in range(d)] + [f"r_{j + 1}" for j in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for x, r in zip(dataset.X, dataset.R):
            writer.writerow([repr(float(v)) for v in x] + [repr(float(v)) for v in r])


def read_dataset_csv(path) -> RiskDataset:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [row for row in reader if row]
    d = sum(1 for name in header if name.startswith("x_"))
    if d == 0 or len(header) != 2 * d:
        raise InvalidArgumentError(f"{path}: expected x_1..x_D, r_1..r_D columns")
    data = np.array([[float(v) for v in row] for row in rows])
    return RiskDataset(X=data[:, :d], R=data[:, d:])


def write_table_csv(path, table: np.ndarray, prefix: str = "x") -> None:
    """Write a plain value table; NaN cells become empty fields."""
    table = as_matrix(table, "table", allow_nan=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"{prefix}_{j + 1}" for j in range(table.shape[1])])
        for row in table:
            writer.writerow(["" if np.isnan(v) else repr(float(v)) for v in row])


def read_table_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        rows = [row for row in reader if row]
    return np.array([[np.nan if v == "" else float(v) for v in row] for row in rows])
