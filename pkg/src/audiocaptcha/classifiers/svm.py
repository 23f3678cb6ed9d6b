"""Soft-margin RBF support vector machines.

Binary machines are trained with SMO on the dual

    max  sum(a) - 1/2 sum_ij a_i a_j y_i y_j K(x_i, x_j)
    s.t. 0 <= a_i <= C,  sum(a_i y_i) = 0

choosing the maximal violating pair at every step.  The decision function
is ``f(x) = sum_i a_i y_i K(x_i, x) + b``.
"""
from __future__ import annotations

import itertools
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

SV_THRESHOLD = 1e-8
TAU = 1e-12


class SvmError(ValueError):
    pass


class ConvergenceWarning(UserWarning):
    pass


def rbf_kernel(x1, x2, gamma: float) -> float:
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x1.shape != x2.shape:
        raise SvmError(f"dimension mismatch: {x1.shape} vs {x2.shape}")
    if gamma <= 0:
        raise SvmError("gamma must be positive")
    d = x1 - x2
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_matrix(A, B, gamma: float) -> np.ndarray:
    """Kernel matrix between the rows of ``A`` and ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise SvmError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


class KernelRows:
    """LRU cache of kernel rows; a full precomputed matrix may be supplied."""

    def __init__(self, X, gamma: float, cache_rows: int = 4096, matrix=None):
        self.X = X
        self.gamma = gamma
        self.matrix = matrix
        self.cache_rows = max(int(cache_rows), 2)
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        self._sq = (X * X).sum(1)
        if matrix is None and X.shape[0] <= self.cache_rows:
            self.matrix = rbf_matrix(X, X, gamma)

    def row(self, i: int) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix[i]
        r = self._rows.get(i)
        if r is not None:
            self._rows.move_to_end(i)
            return r
        sq = self._sq + self._sq[i] - 2.0 * self.X @ self.X[i]
        r = np.exp(-self.gamma * np.maximum(sq, 0.0))
        self._rows[i] = r
        if len(self._rows) > self.cache_rows:
            self._rows.popitem(last=False)
        return r

    def diag(self) -> np.ndarray:
        return np.ones(self.X.shape[0])


@dataclass(frozen=True, eq=False)
class BinarySvm:
    support_vectors: np.ndarray
    dual_coeffs: np.ndarray  # alpha_i * y_i
    bias: float
    gamma: float
    C: float
    class_pair: tuple[int, int] = (-1, 1)
    converged: bool = True
    iterations: int = 0
    sv_indices: np.ndarray | None = None  # rows of the training matrix
    degenerate_label: int | None = None  # fixed vote when a class was missing

    @property
    def is_degenerate(self) -> bool:
        return self.support_vectors.shape[0] == 0

    @property
    def dim(self) -> int:
        return self.support_vectors.shape[1]

    def alphas(self) -> np.ndarray:
        return np.abs(self.dual_coeffs)

    def dual_objective(self) -> float:
        if self.is_degenerate:
            return 0.0
        K = rbf_matrix(self.support_vectors, self.support_vectors, self.gamma)
        c = self.dual_coeffs
        return float(np.abs(c).sum() - 0.5 * c @ K @ c)


def smo_train(X, y, C: float, gamma: float, tol: float = 1e-3, max_passes: int = 200,
              cache_rows: int = 4096, kernel=None) -> BinarySvm:
    """Train a binary soft-margin SVM; ``y`` holds +1/-1 labels.

    ``kernel`` may hold the precomputed n x n Gram matrix.  The iteration
    budget is ``max_passes * n`` pair updates; running out of it returns
    the current iterate with ``converged=False`` and a warning.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    n = X.shape[0]
    if y.size != n:
        raise SvmError("X and y disagree on the number of samples")
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise SvmError("labels must be +1 or -1")
    if np.all(y == y[0]):
        raise SvmError("both classes must be present")
    if C <= 0 or gamma <= 0:
        raise SvmError("C and gamma must be positive")

    rows = KernelRows(X, gamma, cache_rows, kernel)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # Q alpha - 1
    pos = y > 0
    max_iter = max_passes * max(n, 10)
    converged = False
    it = 0
    while it < max_iter:
        ygrad = -y * grad
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (~pos & (alpha < C)) | (pos & (alpha > 0))
        i = int(np.argmax(np.where(up, ygrad, -np.inf)))
        j = int(np.argmin(np.where(low, ygrad, np.inf)))
        gap = ygrad[i] - ygrad[j]
        if gap <= tol:
            converged = True
            break
        Ki = rows.row(i)
        Kj = rows.row(j)
        eta = max(Ki[i] + Kj[j] - 2.0 * Ki[j], TAU)
        step = gap / eta
        room_i = C - alpha[i] if pos[i] else alpha[i]
        room_j = alpha[j] if pos[j] else C - alpha[j]
        step = min(step, room_i, room_j)
        alpha[i] += y[i] * step
        alpha[j] -= y[j] * step
        for k, room in ((i, room_i), (j, room_j)):
            if step == room:
                alpha[k] = 0.0 if alpha[k] < 0.5 * C else C
        grad += y * step * (Ki - Kj)
        it += 1
    if not converged:
        warnings.warn(f"SMO stopped after {it} updates without meeting tol={tol}",
                      ConvergenceWarning, stacklevel=2)

    ygrad = -y * grad
    free = (alpha > SV_THRESHOLD) & (alpha < C - SV_THRESHOLD)
    if np.any(free):
        b = float(ygrad[free].mean())
    else:
        up = (pos & (alpha < C)) | (~pos & (alpha > 0))
        low = (~pos & (alpha < C)) | (pos & (alpha > 0))
        hi = ygrad[up].max() if np.any(up) else 0.0
        lo = ygrad[low].min() if np.any(low) else 0.0
        b = float(0.5 * (hi + lo))
    sv = np.flatnonzero(alpha > SV_THRESHOLD)
    return BinarySvm(X[sv].copy(), alpha[sv] * y[sv], b, float(gamma), float(C),
                     converged=converged, iterations=it, sv_indices=sv)


def decision_value(svm: BinarySvm, x) -> float | np.ndarray:
    """``sum_i coeff_i K(sv_i, x) + b``; ``x`` may be one vector or a row stack."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Xq = np.atleast_2d(x)
    if svm.is_degenerate:
        out = np.full(Xq.shape[0], svm.bias)
    else:
        if Xq.shape[1] != svm.dim:
            raise SvmError(f"expected {svm.dim} features, got {Xq.shape[1]}")
        out = rbf_matrix(Xq, svm.support_vectors, svm.gamma) @ svm.dual_coeffs + svm.bias
    return float(out[0]) if single else out


def kkt_violations(svm: BinarySvm, X, y, alpha=None) -> np.ndarray:
    """Per-sample KKT violation on the training set (0 when satisfied)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    if alpha is None:
        alpha = np.zeros(X.shape[0])
        alpha[svm.sv_indices] = svm.alphas()
    margin = y * decision_value(svm, X)
    at_zero = alpha <= SV_THRESHOLD
    at_c = alpha >= svm.C - SV_THRESHOLD
    free = ~at_zero & ~at_c
    v = np.zeros(X.shape[0])
    v[at_zero] = np.maximum(0.0, 1.0 - margin[at_zero])
    v[at_c] = np.maximum(0.0, margin[at_c] - 1.0)
    v[free] = np.abs(margin[free] - 1.0)
    return v


@dataclass(frozen=True, eq=False)
class MulticlassSvm:
    """One-vs-one ensemble; ``machines[k]`` separates ``pairs[k] = (neg, pos)``."""

    labels: tuple[int, ...]
    machines: tuple[BinarySvm, ...]
    gamma: float
    C: float
    pairs: tuple[tuple[int, int], ...] = field(default=())

    def __post_init__(self):
        if not self.pairs:
            object.__setattr__(self, "pairs", tuple(m.class_pair for m in self.machines))

    @property
    def dim(self) -> int:
        for m in self.machines:
            if not m.is_degenerate:
                return m.dim
        return -1

    def present_labels(self) -> set[int]:
        out = set()
        for m in self.machines:
            if m.is_degenerate:
                if m.degenerate_label is not None:
                    out.add(m.degenerate_label)
            else:
                out.update(m.class_pair)
        return out


def ovo_train(X, labels, C: float, gamma: float, all_labels=None, tol: float = 1e-3,
              kernel=None, max_passes: int = 200) -> MulticlassSvm:
    """One machine per unordered label pair.

    ``all_labels`` fixes the label universe (e.g. 0-9 plus noise); pairs
    involving a label without samples become degenerate machines that always
    vote for the label that is present.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    labels = np.asarray(labels).astype(int)
    present = sorted(set(labels.tolist()))
    if len(present) < 2:
        raise SvmError("need at least two classes")
    universe = sorted(set(all_labels) | set(present)) if all_labels is not None else present
    machines = []
    for a, b in itertools.combinations(universe, 2):
        ia = np.flatnonzero(labels == a)
        ib = np.flatnonzero(labels == b)
        if ia.size == 0 or ib.size == 0:
            vote = b if ib.size else (a if ia.size else None)
            bias = 0.0 if vote is None else (1.0 if vote == b else -1.0)
            machines.append(BinarySvm(np.zeros((0, X.shape[1])), np.zeros(0), bias, gamma, C,
                                      class_pair=(a, b), sv_indices=np.zeros(0, int),
                                      degenerate_label=vote))
            continue
        idx = np.concatenate([ia, ib])
        yy = np.concatenate([-np.ones(ia.size), np.ones(ib.size)])
        sub = kernel[np.ix_(idx, idx)] if kernel is not None else None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ConvergenceWarning)
            m = smo_train(X[idx], yy, C, gamma, tol=tol, kernel=sub, max_passes=max_passes)
        machines.append(BinarySvm(m.support_vectors, m.dual_coeffs, m.bias, gamma, C,
                                  class_pair=(a, b), converged=m.converged,
                                  iterations=m.iterations, sv_indices=idx[m.sv_indices]))
    return MulticlassSvm(tuple(universe), tuple(machines), float(gamma), float(C))


def ovo_decisions(model: MulticlassSvm, X, kernel_to_train=None) -> np.ndarray:
    """Decision values, shape (n_query, n_machines).

    With ``kernel_to_train`` (query x training-set Gram block) support
    vectors are looked up by training index instead of recomputed.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    out = np.empty((X.shape[0], len(model.machines)))
    for k, m in enumerate(model.machines):
        if m.is_degenerate:
            out[:, k] = m.bias
        elif kernel_to_train is not None:
            out[:, k] = kernel_to_train[:, m.sv_indices] @ m.dual_coeffs + m.bias
        else:
            if X.shape[1] != m.dim:
                raise SvmError(f"expected {m.dim} features, got {X.shape[1]}")
            out[:, k] = rbf_matrix(X, m.support_vectors, m.gamma) @ m.dual_coeffs + m.bias
    return out


def vote(model: MulticlassSvm, decisions: np.ndarray) -> np.ndarray:
    """Majority vote; ties go to the larger summed |decision| of the winning
    votes, then to the smaller label."""
    decisions = np.atleast_2d(decisions)
    labels = list(model.labels)
    pos = {lab: i for i, lab in enumerate(labels)}
    n = decisions.shape[0]
    votes = np.zeros((n, len(labels)))
    margin = np.zeros((n, len(labels)))
    rows = np.arange(n)
    for k, m in enumerate(model.machines):
        a, b = m.class_pair
        if m.is_degenerate:
            if m.degenerate_label is not None:
                votes[:, pos[m.degenerate_label]] += 1
            continue
        d = decisions[:, k]
        winner = np.where(d > 0, pos[b], pos[a])
        votes[rows, winner] += 1
        margin[rows, winner] += np.abs(d)
    best = []
    for r in range(n):
        top = np.flatnonzero(votes[r] == votes[r].max())
        if top.size > 1:
            mtop = margin[r, top]
            top = top[mtop == mtop.max()]
        best.append(labels[int(top[0])])
    return np.asarray(best, dtype=int)


def ovo_predict(model: MulticlassSvm, x) -> int | np.ndarray:
    x = np.asarray(x, dtype=float)
    labels = vote(model, ovo_decisions(model, np.atleast_2d(x)))
    return int(labels[0]) if x.ndim == 1 else labels
