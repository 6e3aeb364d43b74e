import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from costids.costs import (
    CostMatrix,
    alpha_cost_matrix,
    decide,
    decide_batch,
    expected_loss,
    expected_losses,
    kdd_cost_matrix,
    load_cost_matrix,
    save_cost_matrix,
    tradeoff_cost_matrix,
    zero_one_matrix,
)
from costids.errors import ConfigError, DataError
from costids.kdd import ClassLabel as L

# The contest table as printed: TABLE[actual][predicted].
TABLE = {
    "Normal": {"Normal": 0, "Probe": 1, "DoS": 2, "U2R": 2, "R2L": 2},
    "Probe": {"Normal": 1, "Probe": 0, "DoS": 2, "U2R": 2, "R2L": 2},
    "DoS": {"Normal": 2, "Probe": 1, "DoS": 0, "U2R": 2, "R2L": 2},
    "U2R": {"Normal": 3, "Probe": 2, "DoS": 2, "U2R": 0, "R2L": 2},
    "R2L": {"Normal": 4, "Probe": 2, "DoS": 2, "U2R": 2, "R2L": 0},
}
ORDER = ["Normal", "Probe", "DoS", "U2R", "R2L"]


def brute_loss(p, table_cost, i):
    total = 0.0
    for j in range(len(p)):
        total += p[j] * table_cost(i, j)
    return total


def test_kdd_matrix_matches_table_entrywise():
    cm = kdd_cost_matrix()
    for pred in ORDER:
        for actual in ORDER:
            assert cm[ORDER.index(pred), ORDER.index(actual)] == TABLE[actual][pred]
    assert cm[L.NORMAL, L.R2L] == 4
    assert cm[L.U2R, L.NORMAL] == 2
    assert np.all(np.diag(cm.values) == 0)


def test_expected_loss_examples():
    cm = kdd_cost_matrix()
    point_normal = np.eye(5)[L.NORMAL]
    assert expected_loss(point_normal, cm, L.DOS) == 2
    assert expected_loss(np.full(5, 0.2), CostMatrix(np.zeros((5, 5))), 3) == 0
    p = np.array([0.5, 0, 0, 0, 0.5])
    assert expected_loss(p, cm, L.R2L) == pytest.approx(1.0, abs=1e-15)


def test_decide_examples_against_table_enumeration():
    cm = kdd_cost_matrix()
    d = decide(np.eye(5)[0], cm)
    assert d.chosen == L.NORMAL and d.losses[0] == 0

    assert decide([0.1, 0.2, 0.4, 0.2, 0.1], zero_one_matrix()).chosen == L.DOS

    p = [0.5, 0, 0, 0, 0.5]
    oracle = [brute_loss(p, lambda i, j: TABLE[ORDER[j]][ORDER[i]], i) for i in range(5)]
    assert oracle == [2.0, 1.5, 2.0, 2.0, 1.0]
    d = decide(p, cm)
    np.testing.assert_allclose(d.losses, oracle, atol=1e-15)
    assert d.chosen == L.R2L


def test_tie_breaks_to_lowest_index():
    assert decide(np.full(5, 0.2), zero_one_matrix()).chosen == 0
    assert decide([0.0, 0.5, 0.5, 0.0, 0.0], zero_one_matrix()).chosen == 1


def test_dimension_mismatch():
    with pytest.raises(ConfigError):
        expected_loss([0.5, 0.5], kdd_cost_matrix(), 0)
    with pytest.raises(ConfigError):
        decide([1.0, 0, 0], kdd_cost_matrix())


def test_validator_rejects_nonstandard_unless_relaxed():
    with pytest.raises(ConfigError):
        CostMatrix(np.ones((3, 3)))
    with pytest.raises(ConfigError):
        CostMatrix(-(1 - np.eye(3)))
    assert CostMatrix(np.ones((3, 3)), standard=False).k == 3


def test_alpha_matrix_examples():
    a1 = alpha_cost_matrix(1).values
    attacks = [1, 2, 3, 4]
    assert all(a1[0, j] == 1 and a1[j, 0] == 1 for j in attacks)
    assert np.all(a1[1:, 1:] == 0)

    a0 = alpha_cost_matrix(0)
    rng = np.random.default_rng(1)
    for p in rng.dirichlet(np.ones(5), size=50):
        assert expected_loss(p, a0, 0) == 0

    a5 = alpha_cost_matrix(5)
    p = [0.9, 0.1, 0, 0, 0]
    assert expected_loss(p, a5, L.NORMAL) == pytest.approx(0.5)
    assert expected_loss(p, a5, L.PROBE) == pytest.approx(0.9)
    assert decide(p, a5).chosen == L.NORMAL

    with pytest.raises(ConfigError):
        alpha_cost_matrix(-0.1)
    np.testing.assert_array_equal(alpha_cost_matrix(3, transpose=True).values, alpha_cost_matrix(3).values.T)


def test_alpha_losses_affine_in_alpha():
    rng = np.random.default_rng(2)
    P = rng.dirichlet(np.ones(5), size=200)
    l0 = expected_losses(P, alpha_cost_matrix(0.0))
    l1 = expected_losses(P, alpha_cost_matrix(1.0))
    for a in (0.5, 2.0, 7.3):
        np.testing.assert_allclose(expected_losses(P, alpha_cost_matrix(a)), l0 + a * (l1 - l0), atol=1e-12)


def test_tradeoff_matrix_examples():
    cm = tradeoff_cost_matrix(1, 0.5, 0.5)
    assert cm[1, 0] == 2 and cm[0, 1] == 2

    # TP=3, FN=1, FP=1, TN=4 with classes 0=normal, 1=attack.
    y = np.array([1, 1, 1, 1, 0, 0, 0, 0, 0])
    pred = np.array([1, 1, 1, 0, 1, 0, 0, 0, 0])
    p_attack = y.mean()
    cm = tradeoff_cost_matrix(2, 1 - p_attack, p_attack)
    empirical = cm.values[pred, y].mean()
    fa, dr = 1 / 5, 3 / 4
    assert fa - 2 * dr + 2 == pytest.approx(0.7)
    assert empirical == pytest.approx(0.7, abs=1e-12)

    perfect = cm.values[y, y].mean()
    assert perfect == 0

    with pytest.raises(ConfigError):
        tradeoff_cost_matrix(1, 0.0, 1.0)
    with pytest.raises(ConfigError):
        tradeoff_cost_matrix(0, 0.5, 0.5)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 100))
def test_scale_covariance(seed, c):
    rng = np.random.default_rng(seed)
    C = rng.uniform(0, 5, size=(5, 5))
    np.fill_diagonal(C, 0)
    cm = CostMatrix(C)
    p = rng.dirichlet(np.ones(5))
    d1, d2 = decide(p, cm), decide(p, cm.scaled(c))
    np.testing.assert_allclose(d2.losses, c * d1.losses, rtol=1e-12, atol=1e-300)
    if np.sort(d1.losses)[1] - d1.losses.min() > 1e-9 * d1.losses.max():
        assert d1.chosen == d2.chosen


def test_batch_agrees_with_single():
    rng = np.random.default_rng(3)
    P = rng.dirichlet(np.ones(5), size=100)
    cm = kdd_cost_matrix()
    assert list(decide_batch(P, cm)) == [decide(p, cm).chosen for p in P]


def test_cost_matrix_file_roundtrip(tmp_path):
    path = tmp_path / "c.csv"
    save_cost_matrix(path, kdd_cost_matrix())
    assert load_cost_matrix(path) == kdd_cost_matrix()

    bad = tmp_path / "bad.csv"
    bad.write_text("# rows=prediction, columns=truth\n" + "\n".join(",".join(["1"] * 5) for _ in range(5)))
    with pytest.raises(DataError):
        load_cost_matrix(bad)
    assert load_cost_matrix(bad, allow_nonstandard=True)[0, 0] == 1

    noheader = tmp_path / "nh.csv"
    noheader.write_text("\n".join(",".join(["0"] * 5) for _ in range(5)))
    with pytest.raises(DataError):
        load_cost_matrix(noheader)
