import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from audiocaptcha.classifiers import (
    BinarySvm,
    ConvergenceWarning,
    SvmError,
    decision_value,
    kkt_violations,
    ovo_decisions,
    ovo_predict,
    ovo_train,
    rbf_kernel,
    rbf_matrix,
    smo_train,
    vote,
)
from audiocaptcha.classifiers.svm import KernelRows, MulticlassSvm
from oracles import dual_qp, hinge_loss, rbf

XOR_X = np.array([[0.0, 0.0], [1.0, 1.0], [0.0, 1.0], [1.0, 0.0]])
XOR_Y = np.array([-1.0, -1.0, 1.0, 1.0])


def _toy(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(2, 9))
    X = rng.uniform(-2, 2, (n, 2))
    y = np.where(rng.random(n) < 0.5, -1.0, 1.0)
    y[0], y[1] = -1.0, 1.0
    return X, y, float(rng.choice([0.1, 1.0, 10.0])), float(rng.choice([0.5, 1.0, 2.0]))


def _blobs(seed=0, per=15):
    rng = np.random.default_rng(seed)
    centres = np.array([[0.0, 0.0], [6.0, 0.0], [0.0, 6.0]])
    X = np.vstack([c + rng.standard_normal((per, 2)) * 0.5 for c in centres])
    return X, np.repeat([0, 1, 2], per), centres


def test_rbf_examples(rng):
    x = rng.standard_normal(5)
    assert rbf_kernel(x, x, 0.7) == 1.0
    assert rbf_kernel([0.0, 0.0], [1.0, 0.0], 1.0) == pytest.approx(np.exp(-1), abs=1e-12)
    for _ in range(100):
        a, b = rng.standard_normal(4), rng.standard_normal(4)
        assert abs(rbf_kernel(a, b, 0.3) - rbf_kernel(b, a, 0.3)) <= 1e-15
    with pytest.raises(SvmError):
        rbf_kernel([1.0], [1.0, 2.0], 1.0)
    A, B = rng.standard_normal((6, 3)), rng.standard_normal((4, 3))
    np.testing.assert_allclose(rbf_matrix(A, B, 0.4), rbf(A, B, 0.4), atol=1e-14)


def test_two_point_bisector():
    X = np.array([[0.0, 0.0], [2.0, 1.0]])
    m = smo_train(X, np.array([-1.0, 1.0]), 1e6, 1.0)
    assert m.support_vectors.shape[0] == 2
    assert abs(decision_value(m, X.mean(0))) <= 1e-6


@pytest.mark.parametrize("seed", range(25))
def test_dual_objective_matches_oracle(seed):
    X, y, C, gamma = _toy(seed)
    m = smo_train(X, y, C, gamma)
    _, best = dual_qp(rbf(X, X, gamma), y, C)
    assert abs(m.dual_objective() - best) <= 1e-4
    assert np.all(kkt_violations(m, X, y) <= 1e-3)
    assert abs(m.dual_coeffs.sum()) <= 1e-6
    assert np.all(m.alphas() <= C + 1e-9)


def test_xor():
    m = smo_train(XOR_X, XOR_Y, 10.0, 1.0)
    assert np.all(np.sign(decision_value(m, XOR_X)) == XOR_Y)


def test_free_support_vector_on_margin():
    X, y, _, gamma = _toy(3, n=8)
    m = smo_train(X, y, 10.0, gamma)
    free = (m.alphas() > 1e-8) & (m.alphas() < m.C - 1e-8)
    for sv, coef in zip(m.support_vectors[free], m.dual_coeffs[free]):
        assert decision_value(m, sv) == pytest.approx(np.sign(coef), abs=1e-3)


def test_decision_value_matches_double_loop(rng):
    X, y, C, gamma = _toy(7, n=8)
    m = smo_train(X, y, C, gamma)
    q = rng.uniform(-2, 2, (5, 2))
    for x in q:
        ref = m.bias
        for sv, c in zip(m.support_vectors, m.dual_coeffs):
            ref += c * np.exp(-gamma * sum((a - b) ** 2 for a, b in zip(sv, x)))
        assert decision_value(m, x) == pytest.approx(ref, abs=1e-12)
    np.testing.assert_allclose(decision_value(m, q), [decision_value(m, x) for x in q])
    with pytest.raises(SvmError):
        decision_value(m, np.zeros(3))


def test_precomputed_kernel_and_cache_agree():
    X, y, C, gamma = _toy(11, n=8)
    a = smo_train(X, y, C, gamma)
    b = smo_train(X, y, C, gamma, kernel=rbf_matrix(X, X, gamma))
    c = smo_train(X, y, C, gamma, cache_rows=2)
    np.testing.assert_array_equal(a.dual_coeffs, b.dual_coeffs)
    # row-wise evaluation may differ from the full matrix in the last ulp
    np.testing.assert_allclose(a.dual_coeffs, c.dual_coeffs, atol=1e-12)
    assert a.bias == b.bias and c.bias == pytest.approx(a.bias, abs=1e-12)
    rows = KernelRows(X, gamma, cache_rows=2)
    np.testing.assert_allclose(rows.row(3), rbf_matrix(X, X, gamma)[3])


def test_smo_errors():
    with pytest.raises(SvmError):
        smo_train(XOR_X, np.ones(4), 1.0, 1.0)
    with pytest.raises(SvmError):
        smo_train(XOR_X, np.array([0, 1, 0, 1]), 1.0, 1.0)
    with pytest.raises(SvmError):
        smo_train(XOR_X, XOR_Y, 0.0, 1.0)


def test_budget_exhaustion_warns():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((60, 2))
    y = np.where(rng.random(60) < 0.5, -1.0, 1.0)
    with pytest.warns(ConvergenceWarning):
        m = smo_train(X, y, 100.0, 5.0, max_passes=1)
    assert not m.converged


def test_hinge_loss_non_increasing_in_c():
    rng = np.random.default_rng(2024)
    X = rng.standard_normal((20, 2))
    y = np.where(X[:, 0] + 0.8 * rng.standard_normal(20) > 0, 1.0, -1.0)
    losses = [hinge_loss(smo_train(X, y, C, 0.5), X, y) for C in (0.01, 1.0, 100.0)]
    assert losses[0] >= losses[1] >= losses[2]


def test_ovo_pair_count_and_blobs():
    X, labels, centres = _blobs()
    m = ovo_train(X, labels, 10.0, 0.5, all_labels=range(11))
    assert len(m.machines) == 55
    assert sorted(m.pairs) == list(itertools.combinations(range(11), 2))
    assert np.all(ovo_predict(m, X) == labels)
    for c, lab in zip(centres, (0, 1, 2)):
        assert ovo_predict(m, c) == lab
    assert set(ovo_predict(m, np.random.default_rng(0).uniform(-5, 10, (200, 2)))) <= {0, 1, 2}


def test_missing_class_degenerates():
    X, labels, _ = _blobs()
    keep = labels != 1
    m = ovo_train(X[keep], labels[keep], 10.0, 0.5, all_labels=(0, 1, 2, 3))
    dead = [k for k in m.machines if 1 in k.class_pair]
    assert len(dead) == 3 and all(k.is_degenerate for k in dead)
    assert 1 not in set(ovo_predict(m, X).tolist())


def test_ovo_errors():
    with pytest.raises(SvmError):
        ovo_train(XOR_X, [0, 0, 0, 0], 1.0, 1.0)


def _stub(pairs):
    machines = tuple(BinarySvm(np.zeros((1, 1)), np.zeros(1), 0.0, 1.0, 1.0, class_pair=p) for p in pairs)
    return MulticlassSvm((0, 1, 2), machines, 1.0, 1.0)


def test_vote_ties():
    model = _stub([(0, 1), (0, 2), (1, 2)])
    # 0 beats 1, 2 beats 0, 1 beats 2: three-way tie, margins decide
    d = np.array([[-0.5, 2.0, -0.1]])
    assert vote(model, d)[0] == 2
    # equal margins -> smallest label
    d = np.array([[-1.0, 1.0, -1.0]])
    assert vote(model, d)[0] == 0


def test_prediction_is_deterministic():
    X, labels, _ = _blobs(3)
    m = ovo_train(X, labels, 1.0, 0.5)
    q = np.random.default_rng(1).uniform(-3, 9, (50, 2))
    np.testing.assert_array_equal(ovo_predict(m, q), ovo_predict(m, q))
    np.testing.assert_array_equal(vote(m, ovo_decisions(m, q)), ovo_predict(m, q))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_dual_feasibility_property(seed):
    X, y, C, gamma = _toy(seed)
    m = smo_train(X, y, C, gamma)
    assert abs(m.dual_coeffs.sum()) <= 1e-6
    assert np.all(m.alphas() <= C + 1e-9) and np.all(m.alphas() >= 0)
    assert np.all(kkt_violations(m, X, y) <= 1e-3)
