import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from audiocaptcha.decomposition import (
    PcaError,
    fit_pca,
    fit_spectrum,
    jacobi_eigh,
    project,
    reconstruct,
)

VARS = (0.25, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)


def test_rank_one_data(rng):
    d = rng.standard_normal(6)
    d /= np.linalg.norm(d)
    X = 3.0 + np.outer(rng.standard_normal(40), d)
    for v in VARS:
        m = fit_pca(X, v)
        assert m.n_components == 1
        assert abs(abs(m.components[0] @ d) - 1) < 1e-10


def test_full_retention(rng):
    X = rng.standard_normal((10, 20))
    assert fit_pca(X, 1.0 - 1e-12).n_components == 9
    X = rng.standard_normal((50, 8))
    assert fit_pca(X, 1.0 - 1e-12).n_components == 8


def test_against_naive_eigensolve(rng):
    X = rng.standard_normal((50, 8)) @ rng.standard_normal((8, 8))
    spec = fit_spectrum(X)
    Xc = X - X.mean(0)
    cov = Xc.T @ Xc / 49
    ref = np.sort(np.linalg.eigvalsh(cov))[::-1]
    np.testing.assert_allclose(spec.eigenvalues, ref, atol=1e-8)
    # explained variance per component along each returned direction
    for lam, v in zip(spec.eigenvalues, spec.eigenvectors):
        assert v @ cov @ v == pytest.approx(lam, abs=1e-8)


def test_jacobi_matches_lapack(rng):
    for n in (1, 2, 7, 8, 13):
        A = rng.standard_normal((n, n))
        A = A + A.T
        w, V = jacobi_eigh(A)
        np.testing.assert_allclose(np.sort(w), np.linalg.eigvalsh(A), atol=1e-10)
        np.testing.assert_allclose(V.T @ V, np.eye(n), atol=1e-10)
        np.testing.assert_allclose(A @ V, V * w, atol=1e-9)


def test_solvers_agree_on_pca(rng):
    X = rng.standard_normal((30, 8)) * np.arange(1, 9)
    a = fit_spectrum(X, "lapack")
    b = fit_spectrum(X, "jacobi")
    np.testing.assert_allclose(a.eigenvalues, b.eigenvalues, atol=1e-8)
    np.testing.assert_allclose(a.eigenvectors, b.eigenvectors, atol=1e-8)


def test_sign_convention_and_order(rng):
    spec = fit_spectrum(rng.standard_normal((60, 12)))
    assert np.all(np.diff(spec.eigenvalues) <= 0)
    for v in spec.eigenvectors:
        assert v[np.argmax(np.abs(v))] > 0


def test_determinism(rng):
    X = rng.standard_normal((40, 10))
    a, b = fit_pca(X, 0.9), fit_pca(X.copy(), 0.9)
    assert a.components.tobytes() == b.components.tobytes()
    assert a.eigenvalues.tobytes() == b.eigenvalues.tobytes()


def test_projection_examples(rng):
    X = rng.standard_normal((80, 6)) * [5, 4, 3, 2, 1, 0.5]
    m = fit_pca(X, 0.99)
    np.testing.assert_allclose(project(m, m.mean), 0, atol=1e-12)
    for i in range(m.n_components):
        z = project(m, m.mean + 2.5 * m.components[i])
        expect = np.zeros(m.n_components)
        expect[i] = 2.5
        np.testing.assert_allclose(z, expect, atol=1e-8)


def test_reconstruction_error_accounting(rng):
    X = rng.standard_normal((100, 12)) @ rng.standard_normal((12, 12))
    for v in VARS:
        m = fit_pca(X, v)
        resid = X - reconstruct(m, project(m, X))
        lost = np.sum(resid ** 2) / (X.shape[0] - 1)
        assert lost <= (1 - m.achieved_fraction) * m.total_variance * (1 + 1e-9) + 1e-12


def test_errors(rng):
    with pytest.raises(PcaError):
        fit_pca(np.ones((1, 4)), 0.9)
    with pytest.raises(PcaError):
        fit_pca(np.ones((5, 4)), 0.9)
    m = fit_pca(rng.standard_normal((10, 4)), 0.9)
    with pytest.raises(PcaError):
        project(m, np.zeros(5))
    with pytest.raises(PcaError):
        fit_spectrum(rng.standard_normal((10, 4))).n_components(0.0)
    with pytest.raises(PcaError):
        fit_spectrum(rng.standard_normal((10, 4)), solver="svd")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(VARS), st.floats(-3, 3))
def test_variance_target_and_affinity(seed, v, a):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((30, 7)) * rng.uniform(0.1, 3, 7)
    spec = fit_spectrum(X)
    m = spec.truncate(v)
    assert m.achieved_fraction >= v
    if m.n_components > 1:
        # k is the smallest count meeting the target
        assert spec.eigenvalues[: m.n_components - 1].sum() / spec.total_variance < v
    np.testing.assert_allclose(m.components @ m.components.T, np.eye(m.n_components), atol=1e-8)
    x, y = rng.standard_normal(7), rng.standard_normal(7)
    np.testing.assert_allclose(project(m, a * x + (1 - a) * y),
                               a * project(m, x) + (1 - a) * project(m, y), atol=1e-10)
