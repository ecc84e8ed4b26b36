import numpy as np
import pytest

from risksde import SDESpec, ScoreModel, AdamState, adam_step, loss_and_grads
from risksde.errors import InvalidArgumentError
from risksde.nn import load_checkpoint, save_checkpoint, time_features


def small_model(seed=0, hidden=(8, 8), data_dim=2, cond_dim=0, sde=None):
    return ScoreModel.create(data_dim, hidden=hidden, time_frequencies=2,
                             cond_dim=cond_dim, sde=sde,
                             rng=np.random.default_rng(seed))


def finite_difference_grads(model, x, t, targets, weights=None, cond=None, h=1e-5):
    """Central-difference oracle for the loss gradients."""
    grads = []
    for p in model.parameters():
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        while not it.finished:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            lp, _ = loss_and_grads(model, x, t, targets, weights, cond)
            p[i] = old - h
            lm, _ = loss_and_grads(model, x, t, targets, weights, cond)
            p[i] = old
            g[i] = (lp - lm) / (2 * h)
            it.iternext()
        grads.append(g)
    return grads


def test_zero_final_layer_gives_zero_output():
    model = small_model()
    out = model.forward(np.array([1.3, -0.7]), 0.5)
    assert out.shape == (2,)
    assert np.all(out == 0.0)


def test_zero_output_also_with_schedule_scaling():
    spec = SDESpec(dim=2)
    model = small_model(sde=spec)
    assert np.all(model.forward(np.array([1.0, 0.0]), 0.5) == 0.0)


def test_forward_determinism_bitwise():
    model = small_model(seed=3)
    # give the final layer nonzero weights so the output is nontrivial
    model.weights[-1][:] = np.random.default_rng(7).normal(size=model.weights[-1].shape)
    x = np.array([0.3, 0.9])
    a = model.forward(x, 0.25)
    b = model.forward(x, 0.25)
    assert np.array_equal(a, b)
    batched = model.forward(np.stack([x, x]), 0.25)
    assert np.array_equal(batched[0], batched[1])
    # batched and single-row paths may use different BLAS kernels
    np.testing.assert_allclose(batched[0], a, rtol=0, atol=1e-12)


def test_forward_golden_regression_fixture():
    # frozen from the first verified run of this configuration
    model = small_model(seed=42)
    model.weights[-1][:] = np.random.default_rng(43).normal(size=model.weights[-1].shape)
    got = model.forward(np.array([1.0, 0.0]), 0.5)
    expected = np.array([-0.9273872891417955, 0.7197691774263953])
    np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)


def test_time_features_layout():
    feats = time_features(0.0, 2)
    # [t, sin(pi t), cos(pi t), sin(2 pi t), cos(2 pi t)] at t = 0
    np.testing.assert_allclose(feats[0], [0.0, 0.0, 1.0, 0.0, 1.0])
    assert feats.shape == (1, 5)


def test_loss_zero_when_targets_match_outputs():
    model = small_model(seed=5)
    x = np.array([[0.5, -1.0], [2.0, 0.1]])
    out = model.forward(x, 0.3)
    loss, grads = loss_and_grads(model, x, 0.3, out)
    assert loss == 0.0
    assert all(np.all(g == 0.0) for g in grads)


def test_single_linear_layer_analytic_gradient():
    # one linear layer, gradient of (w*x - target)^2 w.r.t. w is 2*w*x^2 - 2*x*target
    model = ScoreModel.create(1, hidden=(), time_frequencies=1, out_dim=1,
                              rng=np.random.default_rng(0))
    w = 0.8
    model.weights[0][:] = 0.0
    model.weights[0][0, 0] = w
    x, target = 1.7, -0.4
    # t = 0 makes the sin feature 0; the t and cos features have zero weight
    loss, grads = loss_and_grads(model, np.array([x]), 0.0, np.array([target]))
    expected = 2 * w * x**2 - 2 * x * target
    np.testing.assert_allclose(grads[0][0, 0], expected, rtol=1e-12)
    np.testing.assert_allclose(loss, (w * x - target) ** 2, rtol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("with_sde", [False, True])
def test_gradients_match_finite_differences(seed, with_sde):
    rng = np.random.default_rng(seed)
    hidden = tuple(rng.integers(3, 16, size=rng.integers(1, 3)))
    sde = SDESpec(dim=3) if with_sde else None
    model = ScoreModel.create(3, hidden=hidden, time_frequencies=2, sde=sde,
                              rng=np.random.default_rng(seed + 10))
    for p in model.parameters():
        p += 0.1 * rng.normal(size=p.shape)
    x = rng.normal(size=(4, 3))
    t = 0.4
    targets = rng.normal(size=(4, 3))
    weights = rng.uniform(0.2, 1.0, size=4)
    _, grads = loss_and_grads(model, x, t, targets, weights)
    fd = finite_difference_grads(model, x, t, targets, weights)
    for g, g_fd in zip(grads, fd):
        scale = np.maximum(np.abs(g_fd), 1e-6)
        assert np.max(np.abs(g - g_fd) / scale) < 1e-4


def test_gradients_with_conditioning_match_finite_differences():
    rng = np.random.default_rng(9)
    model = ScoreModel.create(2, hidden=(6,), time_frequencies=1, cond_dim=3,
                              rng=np.random.default_rng(11))
    for p in model.parameters():
        p += 0.1 * rng.normal(size=p.shape)
    x = rng.normal(size=(3, 2))
    cond = rng.normal(size=(3, 3))
    targets = rng.normal(size=(3, 2))
    _, grads = loss_and_grads(model, x, 0.7, targets, cond=cond)
    fd = finite_difference_grads(model, x, 0.7, targets, cond=cond)
    for g, g_fd in zip(grads, fd):
        scale = np.maximum(np.abs(g_fd), 1e-6)
        assert np.max(np.abs(g - g_fd) / scale) < 1e-4


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(21)
    model = small_model(seed=2)
    for p in model.parameters():
        p += 0.1 * rng.normal(size=p.shape)
    x = rng.normal(size=2)
    cot = rng.normal(size=2)
    grad = model.input_gradient(x, 0.3, cot)
    h = 1e-6
    fd = np.zeros(2)
    for j in range(2):
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        fd[j] = (cot @ model.raw_forward(model._assemble(xp, 0.3, None)[0])[0]
                 - cot @ model.raw_forward(model._assemble(xm, 0.3, None)[0])[0]) / (2 * h)
    np.testing.assert_allclose(grad, fd, rtol=1e-6, atol=1e-8)


def test_empty_batch_rejected():
    model = small_model()
    with pytest.raises(InvalidArgumentError):
        loss_and_grads(model, np.empty((0, 2)), 0.5, np.empty((0, 2)))


def test_negative_weights_rejected():
    model = small_model()
    with pytest.raises(InvalidArgumentError):
        loss_and_grads(model, np.ones((2, 2)), 0.5, np.ones((2, 2)), weights=[-1.0, 1.0])


def test_dimension_mismatch_rejected():
    model = small_model()
    with pytest.raises(InvalidArgumentError):
        model.forward(np.array([1.0, 2.0, 3.0]), 0.5)


def test_adam_zero_gradients_leave_parameters_unchanged():
    model = small_model(seed=6)
    before = [p.copy() for p in model.parameters()]
    state = AdamState.for_model(model)
    adam_step(model, [np.zeros_like(p) for p in model.parameters()], state)
    for p, b in zip(model.parameters(), before):
        assert np.array_equal(p, b)


def test_adam_descends_against_constant_gradient():
    model = small_model(seed=7)
    state = AdamState.for_model(model, learning_rate=1e-2)
    g = [np.full_like(p, 0.5) for p in model.parameters()]
    start = [p.copy() for p in model.parameters()]
    for _ in range(50):
        adam_step(model, [x.copy() for x in g], state)
    for p, s in zip(model.parameters(), start):
        assert np.all(p < s)  # moves opposite the positive gradient


def test_adam_first_step_size_bound():
    model = small_model(seed=8)
    lr = 3e-3
    state = AdamState.for_model(model, learning_rate=lr)
    rng = np.random.default_rng(0)
    g = [rng.normal(size=p.shape) for p in model.parameters()]
    before = [p.copy() for p in model.parameters()]
    adam_step(model, g, state)
    for p, b in zip(model.parameters(), before):
        assert np.max(np.abs(p - b)) <= lr * (1 + 1e-8)


def test_adam_shape_mismatch_rejected():
    model = small_model()
    state = AdamState.for_model(model)
    bad = [np.zeros((1, 1)) for _ in model.parameters()]
    with pytest.raises(InvalidArgumentError):
        adam_step(model, bad, state)


def test_training_linear_target_reduces_mse_100x():
    rng = np.random.default_rng(17)
    model = ScoreModel.create(2, hidden=(16, 16), time_frequencies=2,
                              rng=np.random.default_rng(3))
    true_w = np.array([[1.5, -0.3], [0.2, 0.8]])
    x = rng.normal(size=(512, 2))
    y = x @ true_w
    state = AdamState.for_model(model, learning_rate=3e-3)
    loss0, _ = loss_and_grads(model, x, 0.5, y)
    for _ in range(1000):
        idx = rng.integers(0, 512, size=64)
        _, grads = loss_and_grads(model, x[idx], 0.5, y[idx])
        adam_step(model, grads, state)
    loss1, _ = loss_and_grads(model, x, 0.5, y)
    assert loss1 <= loss0 / 100.0


def test_checkpoint_round_trip(tmp_path):
    spec = SDESpec(family="ve", dim=2)
    model = small_model(seed=12, sde=spec)
    rng = np.random.default_rng(1)
    for p in model.parameters():
        p += rng.normal(size=p.shape)
    path = tmp_path / "model.ckpt"
    save_checkpoint(model, path, extra={"method": "unit-test"})
    loaded, extra = load_checkpoint(path)
    assert extra == {"method": "unit-test"}
    assert loaded.sde == spec
    x = rng.normal(size=(5, 2))
    np.testing.assert_array_equal(loaded.forward(x, 0.4), model.forward(x, 0.4))
    with open(path, "rb") as fh:
        assert fh.readline() == b"RSDE-CKPT-1\n"


def test_checkpoint_bad_magic_rejected(tmp_path):
    path = tmp_path / "bogus.ckpt"
    path.write_bytes(b"NOT-A-CKPT\n{}\n")
    with pytest.raises(InvalidArgumentError):
        load_checkpoint(path)
