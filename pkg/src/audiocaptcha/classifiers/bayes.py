"""Gaussian naive Bayes baseline."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

VAR_FLOOR = 1e-9


class BayesError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GnbModel:
    labels: tuple[int, ...]
    priors: np.ndarray
    means: np.ndarray  # (n_classes, d)
    variances: np.ndarray

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def log_joint(self, X) -> np.ndarray:
        """log prior + sum_j log N(x_j; mu_cj, var_cj), shape (n, n_classes)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise BayesError(f"expected {self.dim} features, got {X.shape[1]}")
        ll = -0.5 * (np.log(2 * np.pi * self.variances).sum(1)[None, :]
                     + (((X[:, None, :] - self.means[None]) ** 2) / self.variances[None]).sum(2))
        return ll + np.log(self.priors)[None, :]


def gnb_train(X, labels, priors=None) -> GnbModel:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels).astype(int)
    classes = sorted(set(labels.tolist()))
    means, variances, counts = [], [], []
    for c in classes:
        rows = X[labels == c]
        if rows.shape[0] < 2:
            raise BayesError(f"class {c} has {rows.shape[0]} sample(s); need at least 2")
        means.append(rows.mean(0))
        variances.append(np.maximum(rows.var(0), VAR_FLOOR))
        counts.append(rows.shape[0])
    p = np.asarray(counts if priors is None else priors, dtype=float)
    if np.any(p <= 0):
        raise BayesError("priors must be positive")
    return GnbModel(tuple(classes), p / p.sum(), np.array(means), np.array(variances))


def gnb_predict(model: GnbModel, x) -> int | np.ndarray:
    """Most probable class; exact ties go to the smaller label."""
    x = np.asarray(x, dtype=float)
    idx = np.argmax(model.log_joint(x), axis=1)
    out = np.asarray(model.labels)[idx]
    return int(out[0]) if x.ndim == 1 else out
