import math
import warnings

import numpy as np
import pytest

from costids.errors import ConfigError, DataError
from costids.gmm import (
    GaussianMixture,
    GmmClassifier,
    GmmHyperParams,
    fit_em,
    fit_priors,
    train_gmm_classifier,
)
from costids.kdd import LabeledDataset

from synthetic import gaussian_task


def normal_pdf(x, mean, var):
    return math.exp(-0.5 * (x - mean) ** 2 / var) / math.sqrt(2 * math.pi * var)


def single(mean, var):
    mean = np.atleast_1d(np.asarray(mean, float))
    return GaussianMixture([1.0], [mean], [np.broadcast_to(var, mean.shape)])


def test_log_density_standard_normal_at_mean():
    assert single([0.0, 0.0], 1.0).log_density(np.zeros(2)) == pytest.approx(-math.log(2 * math.pi), abs=1e-12)
    assert -math.log(2 * math.pi) == pytest.approx(-1.83788, abs=1e-5)


def test_log_density_two_component_hand_sum():
    g = GaussianMixture([0.5, 0.5], [[-1.0], [1.0]], [[1.0], [1.0]])
    expected = 0.5 * normal_pdf(0, -1, 1) + 0.5 * normal_pdf(0, 1, 1)
    assert expected == pytest.approx(0.24197, abs=1e-5)
    assert g.log_density([0.0]) == pytest.approx(math.log(expected), abs=1e-12)


def test_log_density_far_tail_is_finite():
    val = single([0.0], 1.0).log_density([100.0])
    assert np.isfinite(val)
    assert val == pytest.approx(-0.5 * 100**2 - 0.5 * math.log(2 * math.pi), rel=1e-12)


def test_log_density_dimension_mismatch():
    with pytest.raises(ConfigError):
        single([0.0, 0.0], 1.0).log_density([1.0, 2.0, 3.0])


def test_single_component_closed_form():
    rng = np.random.default_rng(4)
    X = rng.normal(loc=[3.0, -2.0, 0.5], scale=[1.0, 0.2, 5.0], size=(500, 3))
    g = fit_em(X, GmmHyperParams(n_components=1, max_iter=5, seed=1))
    np.testing.assert_allclose(g.means[0], X.mean(axis=0), rtol=1e-9)
    np.testing.assert_allclose(g.variances[0], X.var(axis=0), rtol=1e-9)
    assert g.weights[0] == 1.0


def test_identical_points_hit_floor():
    X = np.tile([1.5, -2.0], (20, 1))
    g = fit_em(X, GmmHyperParams(n_components=3, max_iter=10))
    np.testing.assert_allclose(g.means, np.tile([1.5, -2.0], (3, 1)), rtol=1e-12)
    np.testing.assert_array_equal(g.variances, np.full((3, 2), 1e-10))
    assert g.weights.sum() == pytest.approx(1.0)


def test_two_cluster_recovery():
    rng = np.random.default_rng(5)
    X = np.concatenate([rng.normal(-10, 1, 100), rng.normal(10, 1, 100)])[:, None]
    g = fit_em(X, GmmHyperParams(n_components=2, max_iter=200, tol=1e-10, seed=3))
    order = np.argsort(g.means[:, 0])
    assert abs(g.means[order[0], 0] + 10) < 0.5 and abs(g.means[order[1], 0] - 10) < 0.5
    np.testing.assert_allclose(g.weights, 0.5, atol=0.1)


@pytest.mark.parametrize("seed", range(5))
def test_em_monotone(seed):
    ds = gaussian_task(800, d=3, seed=seed)
    g = fit_em(ds.X, GmmHyperParams(n_components=6, max_iter=60, tol=1e-12, var_floor=0.05, seed=seed))
    ll = np.array(g.log_likelihoods)
    assert np.all(np.diff(ll) >= -1e-9 * np.abs(ll[:-1]))


def test_em_stops_on_tolerance():
    ds = gaussian_task(300, d=2, seed=1)
    loose = fit_em(ds.X, GmmHyperParams(n_components=4, max_iter=500, tol=1e-2))
    assert loose.converged and len(loose.log_likelihoods) < 500


def test_em_rejects_bad_data():
    with pytest.raises(DataError):
        fit_em(np.empty((0, 2)), GmmHyperParams())
    with pytest.raises(DataError):
        fit_em(np.array([[np.nan, 1.0]]), GmmHyperParams())


def test_fit_priors():
    assert list(fit_priors([0, 0, 0, 2])) == [0.75, 0, 0.25, 0, 0]
    assert list(fit_priors([3, 3])) == [0, 0, 0, 1, 0]
    with pytest.raises(DataError):
        fit_priors([])


def test_posterior_bayes_arithmetic():
    v_hi = 1 / (2 * math.pi * 0.2**2)
    v_lo = 1 / (2 * math.pi * 0.1**2)
    # Densities at the origin: 0.2 and 0.1.
    clf = GmmClassifier((single([0.0], v_hi), single([0.0], v_lo)), [0.5, 0.5])
    np.testing.assert_allclose(clf.posterior([0.0]), [2 / 3, 1 / 3], atol=1e-12)

    same = GmmClassifier((single([0.0], 1.0), single([0.0], 1.0)), [0.5, 0.5])
    np.testing.assert_allclose(same.posterior([0.3]), [0.5, 0.5], atol=1e-15)

    skew = GmmClassifier((single([0.0], 1.0), single([0.0], 1.0)), [0.9, 0.1])
    np.testing.assert_allclose(skew.posterior([0.3]), [0.9, 0.1], atol=1e-12)


def test_posterior_excludes_zero_prior_class():
    clf = GmmClassifier((single([0.0], 1.0), single([0.0], 1.0), None), [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(clf.posterior([0.0]), [1.0, 0.0, 0.0])


def test_classifier_caps_components_and_is_deterministic():
    ds = gaussian_task(600, seed=2)
    small = np.flatnonzero(ds.y == 3)[:7]
    keep = np.concatenate([np.flatnonzero(ds.y != 3), small])
    ds = ds.take(np.sort(keep))
    hp = GmmHyperParams(n_components=20, max_iter=20, seed=11)
    a = train_gmm_classifier(ds, hp)
    b = train_gmm_classifier(ds, hp)
    assert a.models[3].n_components == 7
    for ma, mb in zip(a.models, b.models):
        assert ma.weights.tobytes() == mb.weights.tobytes()
        assert ma.means.tobytes() == mb.means.tobytes()
        assert ma.variances.tobytes() == mb.variances.tobytes()


def test_naive_bayes_configuration():
    ds = gaussian_task(400, seed=3)
    nb = train_gmm_classifier(ds, GmmHyperParams(n_components=1))
    assert all(m.n_components == 1 for m in nb.models)


def test_missing_class_warns_and_gets_zero_posterior():
    ds = gaussian_task(400, seed=4)
    ds = ds.take(np.flatnonzero(ds.y != 4))
    with pytest.warns(UserWarning, match="class 4"):
        clf = train_gmm_classifier(ds, GmmHyperParams(n_components=2, max_iter=10))
    assert clf.models[4] is None and clf.priors[4] == 0
    assert np.all(clf.predict_proba(ds.X)[:, 4] == 0)


def test_separable_training_accuracy():
    rng = np.random.default_rng(6)
    X = np.concatenate([rng.normal(-5, 0.5, (100, 2)), rng.normal(5, 0.5, (100, 2))])
    y = np.repeat([0, 1], 100)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        clf = train_gmm_classifier(LabeledDataset(X, y), GmmHyperParams(n_components=2, max_iter=20))
    assert np.mean(clf.predict_proba(X).argmax(axis=1) == y) == 1.0


def test_log_domain_safety_and_normalization():
    ds = gaussian_task(500, seed=5)
    clf = train_gmm_classifier(ds, GmmHyperParams(n_components=3, max_iter=30))
    rng = np.random.default_rng(7)
    for scale in (1.0, 1e3):
        P = clf.predict_proba(rng.normal(size=(2000, ds.dim)) * scale)
        assert np.all(np.isfinite(P))
        np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-9)


def test_persistence_roundtrip():
    ds = gaussian_task(300, seed=6)
    clf = train_gmm_classifier(ds, GmmHyperParams(n_components=2, max_iter=10))
    back = GmmClassifier.from_dict(clf.to_dict())
    np.testing.assert_array_equal(back.predict_proba(ds.X), clf.predict_proba(ds.X))
