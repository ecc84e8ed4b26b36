import numpy as np
import pytest

from risksde import (
    NoiseModel,
    QuadratureGrid,
    SDESpec,
    general_risk_coefficients,
    psi_cauchy,
    psi_gaussian,
    psi_numeric,
    risk_coefficients,
    sample_noise,
)
from risksde.errors import InvalidArgumentError, NumericalFailureError
from risksde.noise import gaussian_envelope, general_stability_interval, psi_of


# -- independent oracle: dense-trapezoid evaluation of the deduction ---------


def psi_by_trapezoid(r, u=1.0, n=3001, span=30.0):
    """Brute-force 2-D deduction for Cauchy noise with Omega = |chi_r|."""
    r = np.asarray(r, dtype=np.float64)
    axes = [np.linspace(-span / ri, span / ri, n) for ri in r]
    Y1, Y2 = np.meshgrid(axes[0], axes[1], indexing="ij")
    omega = np.exp(-r[0] * np.abs(Y1) - r[1] * np.abs(Y2))
    ln_chi = -(r[0] * u * np.abs(Y1) + r[1] * u * np.abs(Y2))

    def integral(f):
        return np.trapezoid(np.trapezoid(f, axes[1], axis=1), axes[0])

    M = np.array([[integral(omega * Y1**4), integral(omega * Y1**2 * Y2**2)],
                  [integral(omega * Y2**2 * Y1**2), integral(omega * Y2**4)]])
    b = np.array([-2 * integral(omega * ln_chi * Y1**2),
                  -2 * integral(omega * ln_chi * Y2**2)])
    return np.linalg.solve(M, b)


# -- samplers ----------------------------------------------------------------


def test_zero_risk_samples_are_zero(rng):
    model = NoiseModel(kind="gaussian", r=np.zeros(3))
    assert np.all(sample_noise(model, rng, n=100) == 0.0)
    model = NoiseModel(kind="cauchy", r=np.zeros(3))
    assert np.all(sample_noise(model, rng, n=100) == 0.0)


def test_gaussian_sample_std(rng):
    model = NoiseModel(kind="gaussian", r=np.array([2.0]))
    draws = sample_noise(model, rng, n=100_000)
    assert abs(draws.std() - 2.0) <= 0.04


def test_cauchy_sample_quartiles(rng):
    model = NoiseModel(kind="cauchy", r=np.array([1.0]))
    draws = sample_noise(model, rng, n=100_000)[:, 0]
    assert abs(np.median(draws)) <= 0.02
    iqr = np.quantile(draws, 0.75) - np.quantile(draws, 0.25)
    assert abs(iqr - 2.0) <= 0.05


def test_single_draw_shape(rng):
    model = NoiseModel(kind="gaussian", r=np.array([1.0, 1.0]))
    assert sample_noise(model, rng).shape == (2,)


def test_nonzero_center_rejected():
    with pytest.raises(InvalidArgumentError):
        NoiseModel(kind="gaussian", r=np.ones(2), center=0.5)


def test_custom_requires_callbacks():
    with pytest.raises(InvalidArgumentError):
        NoiseModel(kind="custom", r=np.ones(2))


# -- closed forms --------------------------------------------------------------


def test_psi_gaussian_values():
    assert np.all(psi_gaussian(np.zeros(3), 0.7) == 0.0)
    np.testing.assert_allclose(psi_gaussian([1.0, 1.0], 0.7052),
                               [0.49730704, 0.49730704], rtol=1e-6)


def test_psi_cauchy_one_dimension():
    # kappa^2 / 2 for a single coordinate
    np.testing.assert_allclose(psi_cauchy([2.0]), [2.0], rtol=1e-12)


def test_psi_cauchy_hand_solved_two_dim():
    # solve [[6, 1], [1, 6]] psi = (4, 4) by hand: psi = 4/7
    hand = np.linalg.solve(np.array([[6.0, 1.0], [1.0, 6.0]]), np.array([4.0, 4.0]))
    np.testing.assert_allclose(psi_cauchy([1.0, 1.0]), hand, rtol=1e-12)
    np.testing.assert_allclose(hand, [4.0 / 7.0, 4.0 / 7.0], rtol=1e-12)


def test_psi_cauchy_permutation_symmetry():
    psi = psi_cauchy([0.8, 0.8, 0.8, 0.8])
    assert np.allclose(psi, psi[0])


def test_psi_cauchy_zero_coordinates_excluded():
    psi = psi_cauchy([0.0, 2.0])
    assert psi[0] == 0.0
    np.testing.assert_allclose(psi[1], 2.0, rtol=1e-12)  # 1-D system for the active entry


def test_psi_cauchy_negative_rejected():
    with pytest.raises(InvalidArgumentError):
        psi_cauchy([-1.0, 1.0])


def test_psi_cauchy_matches_trapezoid_oracle_heterogeneous():
    for r in ([1.0, 2.0], [0.5, 3.0], [2.0, 0.3]):
        want = psi_by_trapezoid(r)
        np.testing.assert_allclose(psi_cauchy(r), want, rtol=2e-3)


def test_cauchy_deduction_scales_linearly_with_u():
    # the kernel-scale factor enters the Cauchy deduction to the first power
    r = np.array([1.0, 2.0])
    want = psi_by_trapezoid(r, u=0.6)
    np.testing.assert_allclose(0.6 * psi_cauchy(r), want, rtol=2e-3)


# -- quadrature path -----------------------------------------------------------


def cauchy_weight(r):
    r = np.asarray(r, dtype=np.float64)
    return lambda Y: np.exp(-np.abs(np.atleast_2d(Y)) @ r)


def test_psi_numeric_gaussian_d1():
    model = NoiseModel(kind="gaussian", r=np.array([1.0]))
    grid = QuadratureGrid.gauss_legendre(gaussian_envelope(1.0), 1)
    np.testing.assert_allclose(psi_numeric(model, 1.0, grid), [1.0], atol=1e-3)


def test_psi_numeric_cauchy_d1():
    model = NoiseModel(kind="cauchy", r=np.array([2.0]))
    grid = QuadratureGrid.gauss_legendre(cauchy_weight([2.0]), 1)
    np.testing.assert_allclose(psi_numeric(model, 1.0, grid), [2.0], atol=1e-2)


def test_psi_numeric_cauchy_d2_hand_value():
    model = NoiseModel(kind="cauchy", r=np.array([1.0, 1.0]))
    grid = QuadratureGrid.gauss_legendre(cauchy_weight([1.0, 1.0]), 2)
    np.testing.assert_allclose(psi_numeric(model, 1.0, grid),
                               [4.0 / 7.0, 4.0 / 7.0], atol=1e-2)


def test_psi_numeric_gaussian_oracle_equivalence():
    rng = np.random.default_rng(5)
    grid_cache = {}
    for _ in range(50):
        d = int(rng.integers(1, 4))
        r = rng.uniform(0.05, 2.0, size=d)
        u = rng.uniform(0.05, 1.0)
        if d not in grid_cache:
            grid_cache[d] = QuadratureGrid.gauss_legendre(gaussian_envelope(1.0), d)
        model = NoiseModel(kind="gaussian", r=r)
        got = psi_numeric(model, u, grid_cache[d])
        np.testing.assert_allclose(got, psi_gaussian(r, u), atol=1e-3)


def test_psi_numeric_cauchy_oracle_equivalence():
    rng = np.random.default_rng(6)
    for d in (1, 2, 3):
        for _ in range(4):
            r = rng.uniform(0.2, 3.0, size=d)
            model = NoiseModel(kind="cauchy", r=r)
            grid = QuadratureGrid.gauss_legendre(cauchy_weight(r), d)
            got = psi_numeric(model, 1.0, grid)
            np.testing.assert_allclose(got, psi_cauchy(r), atol=1e-2)


def test_psi_monotone_in_each_risk_entry():
    # heavier corruption never enlarges the stability set
    grid_vals = np.linspace(0.2, 3.0, 8)
    prev_g = prev_c = None
    for x in grid_vals:
        g = psi_gaussian([x, 1.0], 0.8)
        c = psi_cauchy([x, 1.0])
        if prev_g is not None:
            assert g[0] >= prev_g[0] - 1e-12
            assert c[0] >= prev_c[0] - 1e-12
        assert np.all(g >= 0) and np.all(c >= 0)
        prev_g, prev_c = g, c


def test_characteristic_function_sanity(rng):
    for model in (NoiseModel(kind="gaussian", r=np.array([0.5, 2.0])),
                  NoiseModel(kind="cauchy", r=np.array([1.0, 0.2]))):
        y = rng.normal(size=(200, 2)) * 3
        vals = model.characteristic(y)
        assert np.all(np.abs(vals) <= 1.0 + 1e-12)
        assert model.characteristic(np.zeros((1, 2)))[0] == 1.0


def test_ill_conditioned_moment_matrix_raises():
    # two identical coordinates -> rank-deficient fourth-moment matrix
    pts = np.random.default_rng(0).normal(size=(500, 1))
    pts = np.hstack([pts, pts])
    grid = QuadratureGrid(points=pts, weights=np.full(500, 1 / 500))
    model = NoiseModel(kind="gaussian", r=np.array([1.0, 1.0]))
    with pytest.raises(NumericalFailureError):
        psi_numeric(model, 1.0, grid)


def test_monte_carlo_grid_agrees_with_tensor():
    model = NoiseModel(kind="gaussian", r=np.array([0.7, 1.3]))

    def sampler(rng, n):
        return rng.standard_normal((n, 2))  # density proportional to the unit envelope

    grid = QuadratureGrid.monte_carlo(sampler, n=200_000, rng=np.random.default_rng(3))
    got = psi_numeric(model, 0.9, grid)
    np.testing.assert_allclose(got, psi_gaussian(model.r, 0.9), atol=1e-3)


def test_custom_noise_through_quadrature():
    r = np.array([1.0, 1.0])
    model = NoiseModel(
        kind="custom", r=r,
        charfn=lambda Y: np.exp(-0.5 * np.sum((r**2) * np.atleast_2d(Y) ** 2, axis=1)),
        sampler=lambda rng, n: r * rng.standard_normal((n, 2)),
    )
    np.testing.assert_allclose(psi_of(model, 0.8), psi_gaussian(r, 0.8), atol=1e-3)


# -- coefficients dispatch ------------------------------------------------------


def test_gaussian_noise_matches_theorem_one_path(vp_spec):
    rng = np.random.default_rng(11)
    for _ in range(100):
        r = rng.uniform(0, 2, size=2)
        t = rng.uniform(0, 1)
        model = NoiseModel(kind="gaussian", r=r)
        a = general_risk_coefficients(vp_spec, model, t)
        b = risk_coefficients(vp_spec, r, t)
        np.testing.assert_allclose(a.v, b.v, rtol=1e-12, atol=1e-15)
        np.testing.assert_array_equal(a.stable, b.stable)


def test_zero_risk_general_path(ve_spec):
    model = NoiseModel(kind="gaussian", r=np.zeros(2))
    c = general_risk_coefficients(ve_spec, model, 0.4)
    np.testing.assert_allclose(c.v**2, ve_spec.v0_sq_of(0.4), rtol=1e-12)
    assert np.all(c.stable)


def test_ve_cauchy_threshold():
    spec = SDESpec(family="ve", sigma_min=0.01, sigma_max=50.0, dim=1)
    model = NoiseModel(kind="cauchy", r=np.array([2.0]))  # deduction psi = 2
    # time where sigma(t)^2 = sigma(0)^2 + 1: deduction 2 > 1, so unstable
    t = spec.T * np.log(1 + 1 / spec.sigma_min**2) / (2 * np.log(spec.sigma_max / spec.sigma_min))
    c = general_risk_coefficients(spec, model, t)
    assert not c.stable[0]
    assert c.v[0] == 0.0
    interval = general_stability_interval(spec, model)
    t2 = spec.T * np.log(1 + 2 / spec.sigma_min**2) / (2 * np.log(spec.sigma_max / spec.sigma_min))
    np.testing.assert_allclose(interval.t_star, t2, rtol=1e-9)


def test_general_interval_custom_noise_bisection(ve_spec):
    r = np.array([1.0, 1.0])
    model = NoiseModel(
        kind="custom", r=r,
        charfn=lambda Y: np.exp(-0.5 * np.sum((r**2) * np.atleast_2d(Y) ** 2, axis=1)),
        sampler=lambda rng, n: r * rng.standard_normal((n, 2)),
    )
    got = general_stability_interval(ve_spec, model)
    want = general_stability_interval(ve_spec, NoiseModel(kind="gaussian", r=r))
    np.testing.assert_allclose(got.t_star, want.t_star, atol=1e-6)
