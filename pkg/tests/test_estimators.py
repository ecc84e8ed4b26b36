import numpy as np
import pytest
from sklearn.base import clone

from risksde import (
    ClassifierFreeDiffusion,
    KNNRiskImputer,
    RiskSensitiveDiffusion,
    RiskVariableDiffusion,
    StandardDiffusion,
)
from risksde.datagen import MixtureSpec, generate_mixture
from risksde.errors import PreconditionError


def small_kwargs(**over):
    base = dict(hidden=(16, 16), time_features=2, steps=300, batch_size=64,
                learning_rate=2e-3, lambda_schedule="kernel_variance",
                sample_steps=100, random_state=0)
    base.update(over)
    return base


@pytest.fixture(scope="module")
def toy_data():
    data = generate_mixture(MixtureSpec.four_component_benchmark(), 1024,
                            np.random.default_rng(0))
    return data.X, data.R


def test_get_params_set_params_clone_round_trip():
    est = RiskSensitiveDiffusion(**small_kwargs(steps=123))
    params = est.get_params()
    assert params["steps"] == 123
    est.set_params(steps=456)
    assert est.get_params()["steps"] == 456
    cloned = clone(est)
    assert cloned.get_params() == est.get_params()


def test_fit_sample_shapes_and_determinism(toy_data):
    X, R = toy_data
    est = RiskSensitiveDiffusion(**small_kwargs())
    est.fit(X, R)
    a = est.sample(64, random_state=5)
    b = est.sample(64, random_state=5)
    assert a.shape == (64, 2)
    np.testing.assert_array_equal(a, b)
    assert np.all(np.isfinite(a))


def test_standard_estimator_ignores_risk(toy_data):
    X, R = toy_data
    a = StandardDiffusion(**small_kwargs()).fit(X, R)
    b = StandardDiffusion(**small_kwargs()).fit(X, None)
    for pa, pb in zip(a.model_.parameters(), b.model_.parameters()):
        np.testing.assert_array_equal(pa, pb)


def test_sample_before_fit_rejected():
    est = RiskSensitiveDiffusion(**small_kwargs())
    with pytest.raises(PreconditionError):
        est.sample(4)


def test_risk_variable_estimator_splits_blocks(toy_data):
    X, R = toy_data
    est = RiskVariableDiffusion(**small_kwargs())
    est.fit(X, R)
    z = est.sample_joint(16, random_state=1)
    x = est.sample(16, random_state=1)
    assert z.shape == (16, 4)
    np.testing.assert_array_equal(x, z[:, :2])


def test_classifier_free_estimator_conditioning(toy_data):
    X, R = toy_data
    est = ClassifierFreeDiffusion(**small_kwargs(guidance_scale=0.0))
    est.fit(X, R)
    zero_cond = est.sample(16, random_state=2)
    risky_cond = est.sample(16, random_state=2, condition=np.array([1.0, 1.0]))
    assert zero_cond.shape == risky_cond.shape == (16, 2)
    assert not np.array_equal(zero_cond, risky_cond)


def test_imputer_transform_sets_risk():
    table = np.array([
        [0.0, np.nan],
        [1.0, 1.0],
        [2.0, 2.0],
        [3.0, 3.0],
        [4.0, 4.0],
        [5.0, 100.0],
    ])
    imp = KNNRiskImputer(n_neighbors=5)
    out = imp.fit_transform(table)
    assert out[0, 1] == 3.0
    assert imp.risk_[0, 1] == 1.0
    assert imp.get_params() == {"n_neighbors": 5}
    cloned = clone(imp)
    assert cloned.get_params() == {"n_neighbors": 5}
