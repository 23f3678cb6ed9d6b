"""PCA by eigendecomposition of the sample covariance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PcaError(ValueError):
    pass


def jacobi_eigh(a, tol: float = 1e-14, max_sweeps: int = 60):
    """Symmetric eigensolver using cyclic Jacobi rotations in round-robin order.

    Each step rotates m/2 disjoint index pairs at once.  Returns
    ``(eigenvalues, eigenvectors)`` in no particular order, vectors as columns.
    """
    a = np.array(a, dtype=float, copy=True)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise PcaError("jacobi_eigh needs a square matrix")
    n = a.shape[0]
    if n == 1:
        return a[0].copy(), np.ones((1, 1))
    m = n + (n % 2)
    if m != n:
        padded = np.zeros((m, m))
        padded[:n, :n] = a
        a = padded
    v = np.eye(m)
    players = np.arange(m)
    scale = np.linalg.norm(a)
    if scale == 0:
        return np.zeros(n), np.eye(n)
    for _ in range(max_sweeps):
        off = a - np.diag(np.diag(a))
        if np.linalg.norm(off) <= tol * scale:
            break
        for _ in range(m - 1):
            p = players[: m // 2]
            q = players[m // 2 :][::-1]
            apq = a[p, q]
            active = np.abs(apq) > 1e-300
            safe = np.where(active, apq, 1.0)
            theta = (a[q, q] - a[p, p]) / (2.0 * safe)
            t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
            t = np.where(theta == 0, 1.0, t)
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rp - s[:, None] * rq
            a[q, :] = s[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = cp * c - cq * s
            a[:, q] = cp * s + cq * c
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = vp * c - vq * s
            v[:, q] = vp * s + vq * c
            players = np.concatenate((players[:1], players[-1:], players[1:-1]))
    return np.diag(a)[:n].copy(), v[:n, :n]


@dataclass(frozen=True, eq=False)
class PcaSpectrum:
    """Full decomposition; cheap to truncate at several variance targets."""

    mean: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # rows

    @property
    def total_variance(self) -> float:
        return float(self.eigenvalues.sum())

    def n_components(self, var_fraction: float) -> int:
        if not 0 < var_fraction <= 1:
            raise PcaError(f"var_fraction must lie in (0, 1], got {var_fraction}")
        cum = np.cumsum(self.eigenvalues) / self.total_variance
        k = int(np.searchsorted(cum, var_fraction, side="left")) + 1
        return min(k, self.eigenvalues.size)

    def truncate(self, var_fraction: float) -> "PcaModel":
        k = self.n_components(var_fraction)
        return PcaModel(
            self.mean, self.eigenvectors[:k].copy(), self.eigenvalues[:k].copy(),
            float(var_fraction), self.total_variance,
        )


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    var_fraction: float
    total_variance: float

    @property
    def n_components(self) -> int:
        return self.components.shape[0]

    @property
    def input_dim(self) -> int:
        return self.mean.size

    @property
    def achieved_fraction(self) -> float:
        return float(self.eigenvalues.sum() / self.total_variance)

    def project(self, x) -> np.ndarray:
        return project(self, x)


def fit_spectrum(X, solver: str = "lapack") -> PcaSpectrum:
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise PcaError("PCA needs at least two samples")
    mean = X.mean(axis=0)
    centred = X - mean
    cov = centred.T @ centred / (X.shape[0] - 1)
    cov = 0.5 * (cov + cov.T)
    if np.trace(cov) <= 0:
        raise PcaError("training data has zero total variance")
    if solver == "lapack":
        w, v = np.linalg.eigh(cov)
    elif solver == "jacobi":
        w, v = jacobi_eigh(cov)
    else:
        raise PcaError(f"unknown eigensolver {solver!r}")
    w = np.maximum(w, 0.0)
    # descending eigenvalue, ties by ascending original index
    order = np.lexsort((np.arange(w.size), -w))
    w = w[order]
    vecs = v[:, order].T.copy()
    pivots = np.argmax(np.abs(vecs), axis=1)
    signs = np.sign(vecs[np.arange(vecs.shape[0]), pivots])
    vecs *= np.where(signs == 0, 1.0, signs)[:, None]
    return PcaSpectrum(mean, w, vecs)


def fit_pca(X, var_fraction: float, solver: str = "lapack") -> PcaModel:
    return fit_spectrum(X, solver).truncate(var_fraction)


def project(model: PcaModel, x) -> np.ndarray:
    """``components @ (x - mean)``; also accepts a matrix of row vectors."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.input_dim:
        raise PcaError(f"expected {model.input_dim} features, got {x.shape[-1]}")
    return (x - model.mean) @ model.components.T


def reconstruct(model: PcaModel, z) -> np.ndarray:
    return np.asarray(z, dtype=float) @ model.components + model.mean
