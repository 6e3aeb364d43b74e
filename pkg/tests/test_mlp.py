import math

import numpy as np
import pytest

from costids.errors import ConfigError, NumericError
from costids.kdd import LabeledDataset
from costids.mlp import (
    MlpClassifier,
    MlpHyperParams,
    MlpParams,
    forward,
    init_params,
    loss_and_gradient,
    mean_loss,
    sgd_epoch,
    train_mlp,
)


def random_model(rng, d=7, h=3, k=5, scale=0.5):
    out = rng.normal(scale=scale, size=(k, (h or d) + 1))
    hid = rng.normal(scale=scale, size=(h, d + 1)) if h else None
    return MlpParams(out, hid)


def finite_difference(params, X, y, eps=1e-5):
    theta = params.flat()
    grad = np.empty_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += eps
        down[i] -= eps
        grad[i] = (mean_loss(params.with_flat(up), X, y) - mean_loss(params.with_flat(down), X, y)) / (2 * eps)
    return grad


def max_rel_error(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)))


def test_zero_weights_give_uniform_posterior_and_log5_loss():
    p = MlpParams(np.zeros((5, 4)), np.zeros((3, 8)))
    X = np.random.default_rng(0).normal(size=(10, 7))
    np.testing.assert_allclose(forward(p, X), 0.2, atol=1e-15)
    loss, _ = loss_and_gradient(p, X, np.arange(10) % 5)
    assert loss == pytest.approx(math.log(5), abs=1e-12)
    assert math.log(5) == pytest.approx(1.60944, abs=1e-5)


@pytest.mark.parametrize("h", [0, 3])
def test_gradient_matches_finite_differences(h):
    rng = np.random.default_rng(10 + h)
    params = random_model(rng, h=h)
    X = rng.normal(size=(20, 7))
    y = rng.integers(0, 5, size=20)
    _, grad = loss_and_gradient(params, X, y)
    assert max_rel_error(grad.flat(), finite_difference(params, X, y)) < 1e-4


def test_duplicated_batch_leaves_loss_and_gradient_unchanged():
    rng = np.random.default_rng(1)
    params = random_model(rng)
    X = rng.normal(size=(15, 7))
    y = rng.integers(0, 5, size=15)
    l1, g1 = loss_and_gradient(params, X, y)
    l2, g2 = loss_and_gradient(params, np.vstack([X, X]), np.concatenate([y, y]))
    assert l1 == pytest.approx(l2, rel=1e-13)
    np.testing.assert_allclose(g1.flat(), g2.flat(), rtol=1e-12, atol=1e-15)


def test_linear_model_is_affine_softmax():
    rng = np.random.default_rng(2)
    W = rng.normal(size=(5, 8))
    X = rng.normal(size=(50, 7))
    P = forward(MlpParams(W), X)
    for x, p in zip(X, P):
        s = [sum(W[c, j] * x[j] for j in range(7)) + W[c, 7] for c in range(5)]
        e = [math.exp(v - max(s)) for v in s]
        np.testing.assert_allclose(p, [v / sum(e) for v in e], rtol=0, atol=1e-12)


def test_forward_normalized_and_in_open_interval():
    rng = np.random.default_rng(3)
    params = random_model(rng, scale=2.0)
    P = forward(params, rng.normal(size=(1000, 7)))
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(P > 0) and np.all(P < 1)


def test_dimension_mismatch():
    params = random_model(np.random.default_rng(4))
    with pytest.raises(ConfigError):
        forward(params, np.zeros((2, 6)))


@pytest.mark.parametrize("h", [0, 4])
def test_sgd_kernel_step_equals_numpy_gradient_step(h):
    rng = np.random.default_rng(20 + h)
    params = random_model(rng, h=h)
    x = rng.normal(size=(1, 7))
    y = np.array([2])
    lr = 0.05
    _, g = loss_and_gradient(params, x, y)
    stepped = sgd_epoch(params, x, y, np.array([0]), lr)
    np.testing.assert_allclose(stepped.output, params.output - lr * g.output, rtol=1e-12, atol=1e-14)
    if h:
        np.testing.assert_allclose(stepped.hidden, params.hidden - lr * g.hidden, rtol=1e-12, atol=1e-14)


def test_linearly_separable_reaches_full_accuracy():
    rng = np.random.default_rng(5)
    X = np.concatenate([rng.normal([-2, -2], 0.5, (50, 2)), rng.normal([2, 2], 0.5, (50, 2))])
    y = np.repeat([0, 1], 50)
    model = train_mlp(LabeledDataset(X, y), MlpHyperParams(learning_rate=0.1, epochs=50), k=2)
    assert np.mean(model.predict_proba(X).argmax(axis=1) == y) == 1.0


XOR_X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
XOR_Y = np.array([0, 1, 1, 0])


def best_linear_xor_accuracy():
    # Any linear rule labels the four points by the sign of w.x + b; enumerate
    # every dichotomy a line can realise and score it.
    best = 0
    for labels in np.ndindex(2, 2, 2, 2):
        labels = np.array(labels)
        realisable = not np.array_equal(labels, XOR_Y) and not np.array_equal(labels, 1 - XOR_Y)
        if realisable:
            best = max(best, np.mean(labels == XOR_Y))
    return best


def test_xor_linear_vs_hidden():
    assert best_linear_xor_accuracy() == 0.75
    ds = LabeledDataset(np.repeat(XOR_X, 25, axis=0), np.repeat(XOR_Y, 25))
    linear = train_mlp(ds, MlpHyperParams(learning_rate=0.05, epochs=200, hidden_units=0), k=2)
    assert np.mean(linear.predict_proba(XOR_X).argmax(axis=1) == XOR_Y) <= 0.75
    hidden = train_mlp(ds, MlpHyperParams(learning_rate=0.1, epochs=300, hidden_units=4, seed=1), k=2)
    assert np.mean(hidden.predict_proba(XOR_X).argmax(axis=1) == XOR_Y) == 1.0


def test_training_is_bitwise_deterministic():
    rng = np.random.default_rng(6)
    ds = LabeledDataset(rng.normal(size=(200, 5)), rng.integers(0, 5, 200))
    hp = MlpHyperParams(learning_rate=0.02, epochs=5, hidden_units=6, seed=9)
    a, b = train_mlp(ds, hp), train_mlp(ds, hp)
    assert a.params.output.tobytes() == b.params.output.tobytes()
    assert a.params.hidden.tobytes() == b.params.hidden.tobytes()
    assert a.loss_history == b.loss_history and len(a.loss_history) == 5


def test_divergence_names_epoch():
    rng = np.random.default_rng(7)
    ds = LabeledDataset(rng.normal(size=(100, 3)) * 1e154, rng.integers(0, 5, 100))
    with pytest.raises(NumericError, match="epoch 1"):
        train_mlp(ds, MlpHyperParams(learning_rate=1e3, epochs=3))


def test_sgd_loss_mostly_non_increasing_on_convex_instance():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(300, 4))
    y = (X @ [1.0, -1.0, 0.5, 0.0] + 0.5 * rng.normal(size=300) > 0).astype(int)
    model = train_mlp(LabeledDataset(X, y), MlpHyperParams(learning_rate=1e-4, epochs=100), k=2)
    violations = np.sum(np.diff(model.loss_history) > 0)
    assert violations <= 1


def test_full_batch_descent_is_monotone():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(200, 4))
    y = rng.integers(0, 5, 200)
    params = init_params(4, 0, 5, rng)
    losses = []
    for _ in range(100):
        loss, g = loss_and_gradient(params, X, y)
        losses.append(loss)
        params = params.with_flat(params.flat() - 0.05 * g.flat())
    assert np.all(np.diff(losses) <= 0)


def test_persistence_roundtrip_bitwise():
    rng = np.random.default_rng(10)
    ds = LabeledDataset(rng.normal(size=(50, 3)), rng.integers(0, 5, 50))
    model = train_mlp(ds, MlpHyperParams(epochs=2, hidden_units=3))
    back = MlpClassifier.from_dict(model.to_dict())
    assert back.params.output.tobytes() == model.params.output.tobytes()
    assert back.params.hidden.tobytes() == model.params.hidden.tobytes()
    assert back.hyperparams == model.hyperparams
