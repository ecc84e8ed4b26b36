import numpy as np
import pytest

from risksde import NoiseModel, SDESpec
from risksde.errors import InvalidArgumentError, NumericalFailureError
from risksde.noise import QuadratureGrid
from risksde.stability import (
    bootstrap_threshold,
    charfn_scan_grid,
    empirical_charfn,
    instability,
    instability_scan,
)


def mixture_draws(n, rng):
    means = np.array([[4.0, 4.0], [-4.0, 4.0], [-4.0, -4.0], [4.0, -4.0]])
    labels = rng.integers(0, 4, size=n)
    return means[labels] + np.sqrt(0.5) * rng.standard_normal((n, 2))


# -- empirical characteristic function ---------------------------------------


def test_charfn_at_origin_is_exactly_one(rng):
    est = empirical_charfn(rng.normal(size=(2000, 2)), np.zeros((1, 2)))
    assert est.values[0] == 1.0 + 0.0j


def test_charfn_standard_normal(rng):
    samples = rng.standard_normal((40_000, 1))
    est = empirical_charfn(samples, np.array([[1.0]]))
    assert abs(est.values[0] - np.exp(-0.5)) <= 3.0 / np.sqrt(40_000)


def test_charfn_point_mass_has_unit_modulus(rng):
    c = np.array([0.7, -1.1])
    samples = np.tile(c, (1500, 1))
    y = np.array([[0.4, 2.0]])
    est = empirical_charfn(samples, y)
    np.testing.assert_allclose(np.abs(est.values[0]), 1.0, rtol=1e-12)
    np.testing.assert_allclose(est.values[0], np.exp(1j * (y[0] @ c)), rtol=1e-12)


def test_charfn_modulus_bound(rng):
    samples = rng.standard_normal((5000, 3))
    est = empirical_charfn(samples, rng.normal(size=(64, 3)))
    assert np.all(np.abs(est.values) <= est.modulus_bound())


def test_charfn_empty_rejected():
    with pytest.raises(InvalidArgumentError):
        empirical_charfn(np.empty((0, 2)), np.zeros((1, 2)))


# -- instability ---------------------------------------------------------------


def test_instability_identical_sets_is_zero(rng):
    x = mixture_draws(4000, rng)
    grid = charfn_scan_grid(x, rng=rng)
    assert instability(x, x, grid) == 0.0


def test_instability_no_valid_nodes_raises(rng):
    x = rng.standard_normal((2000, 1))
    # far-out frequencies: clean modulus below the floor everywhere
    grid = QuadratureGrid(points=np.full((8, 1), 50.0), weights=np.full(8, 1 / 8))
    with pytest.raises(NumericalFailureError):
        instability(x, x + 1.0, grid)


def test_clean_halves_concentrate_near_zero(rng):
    x = mixture_draws(10_000, rng)
    grid = charfn_scan_grid(x, rng=rng)
    threshold = bootstrap_threshold(x, grid, n_bootstrap=40, rng=rng)
    half = instability(x[: 5_000], x[5_000:], grid)
    assert threshold > 0
    assert half <= 5 * threshold  # same null scale


def test_theorem_one_gaussian_scan():
    # risk-adjusted forward marginals match the clean ones inside the interval
    spec = SDESpec(family="vp", dim=2)
    rng = np.random.default_rng(2024)
    x0 = mixture_draws(10_000, rng)
    noise = NoiseModel(kind="gaussian", r=np.array([1.0, 1.0]))
    rows = instability_scan(spec, x0, noise, [0.1, 0.3, 0.5, 0.7, 0.9], rng,
                            n_bootstrap=60)
    by_t = {round(t, 2): (est, thr) for t, est, thr in rows}
    for t in (0.3, 0.5, 0.7, 0.9):
        est, thr = by_t[t]
        assert est <= thr, f"stable t={t}: estimate {est} above threshold {thr}"
    est, thr = by_t[0.1]
    assert est > thr  # outside the stability interval


def test_cauchy_corruption_never_fully_stable():
    spec = SDESpec(family="ve", sigma_min=0.01, sigma_max=50.0, dim=2)
    rng = np.random.default_rng(7)
    x0 = mixture_draws(10_000, rng)
    noise = NoiseModel(kind="cauchy", r=np.array([1.0, 1.0]))
    rows = instability_scan(spec, x0, noise, [0.6], rng, n_bootstrap=60)
    _, est, thr = rows[0]
    assert est > thr


def test_minimum_instability_ordering_for_cauchy():
    # adjusted coefficients reduce the discrepancy at every tested time
    spec = SDESpec(family="ve", sigma_min=0.01, sigma_max=50.0, dim=2)
    noise = NoiseModel(kind="cauchy", r=np.array([1.0, 1.0]))
    for t in (0.6, 0.75, 0.9):
        rng_a = np.random.default_rng(31)
        rng_b = np.random.default_rng(31)
        x0 = mixture_draws(10_000, np.random.default_rng(5))
        adj = instability_scan(spec, x0, noise, [t], rng_a, n_bootstrap=1)[0][1]
        raw = instability_scan(spec, x0, noise, [t], rng_b, adjusted=False,
                               n_bootstrap=1)[0][1]
        assert adj <= raw
