"""Digit-sequence scoring: DTW alignment with a 0/1 mismatch cost.

Two scores are reported for a batch of (truth, prediction) pairs: the share
of CAPTCHAs read exactly, and a per-digit accuracy in which every file
contributes ``len(truth) - min(alignment cost, len(truth))`` correct digits.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

MAX_SEQUENCE = 20


class MetricsError(ValueError):
    pass


def as_digits(seq) -> tuple[int, ...]:
    """Accept ``"04648"``, ``[0, 4, 6, 4, 8]`` and the like."""
    if isinstance(seq, str):
        seq = [int(ch) for ch in seq if not ch.isspace()]
    out = tuple(int(d) for d in seq)
    if any(not 0 <= d <= 9 for d in out):
        raise MetricsError(f"digits must lie in 0-9: {out}")
    if len(out) > MAX_SEQUENCE:
        raise MetricsError(f"sequences are limited to {MAX_SEQUENCE} digits")
    return out


def dirac_cost(a: int, b: int) -> int:
    return 0 if a == b else 1


@dataclass
class AlignmentResult:
    cost_matrix: np.ndarray
    path: list[tuple[int, int]]  # 1-based (i, j) cells from (1, 1) to (n, m)
    total_cost: float
    path_mean_cost: float

    def unmatched_truth(self, truth, pred) -> list[int]:
        """0-based truth positions never aligned to an equal prediction digit."""
        hit = {i - 1 for i, j in self.path if truth[i - 1] == pred[j - 1]}
        return [i for i in range(len(truth)) if i not in hit]


def dtw_align(truth, pred) -> AlignmentResult:
    x = as_digits(truth)
    y = as_digits(pred)
    n, m = len(x), len(y)
    if n == 0 or m == 0:
        cost = float(max(n, m))
        return AlignmentResult(np.zeros((n, m)), [], cost, cost / max(n, m, 1))

    D = (np.asarray(x)[:, None] != np.asarray(y)[None, :]).astype(float)
    L = np.empty((n, m))
    L[0, 0] = D[0, 0]
    L[1:, 0] = D[0, 0] + np.cumsum(D[1:, 0])
    L[0, 1:] = D[0, 0] + np.cumsum(D[0, 1:])
    for i in range(1, n):
        for j in range(1, m):
            L[i, j] = D[i, j] + min(L[i - 1, j - 1], L[i - 1, j], L[i, j - 1])

    # backtrace: diagonal first, then vertical, then horizontal
    i, j = n - 1, m - 1
    path = [(i + 1, j + 1)]
    while (i, j) != (0, 0):
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            steps = ((L[i - 1, j - 1], i - 1, j - 1), (L[i - 1, j], i - 1, j), (L[i, j - 1], i, j - 1))
            best = min(s[0] for s in steps)
            _, i, j = next(s for s in steps if s[0] == best)
        path.append((i + 1, j + 1))
    path.reverse()
    mean_cost = float(np.mean([D[a - 1, b - 1] for a, b in path]))
    return AlignmentResult(L, path, float(L[-1, -1]), mean_cost)


def _pairs(pairs) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    out = [(as_digits(t), as_digits(p)) for t, p in pairs]
    if not out:
        raise MetricsError("need at least one (truth, prediction) pair")
    return out


def digit_accuracy(pairs) -> float:
    pairs = _pairs(pairs)
    total = sum(len(t) for t, _ in pairs)
    if total == 0:
        raise MetricsError("ground truth holds no digits")
    wrong = sum(min(dtw_align(t, p).total_cost, len(t)) for t, p in pairs)
    return (total - wrong) / total


def captcha_accuracy(pairs) -> float:
    pairs = _pairs(pairs)
    return sum(1 for t, p in pairs if t == p) / len(pairs)


@dataclass
class FileRecord:
    path: str
    truth: str
    prediction: str
    cost: float
    exact_match: bool


@dataclass
class EvalReport:
    digit_accuracy: float
    captcha_accuracy: float
    per_file: list[FileRecord] = field(default_factory=list)
    classifier: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)

    def summary(self) -> str:
        return (f"files            {len(self.per_file)}\n"
                f"digit accuracy   {self.digit_accuracy:.4f}\n"
                f"captcha accuracy {self.captcha_accuracy:.4f}\n")


def _fmt(seq: Sequence[int]) -> str:
    return "".join(str(d) for d in seq)


def build_report(records: Sequence[tuple[str, Sequence[int], Sequence[int]]], classifier: str = "") -> EvalReport:
    """``records`` holds (path, truth, prediction) triples."""
    pairs = _pairs([(t, p) for _, t, p in records])
    per_file = []
    for (path, _, _), (t, p) in zip(records, pairs):
        cost = dtw_align(t, p).total_cost
        per_file.append(FileRecord(path, _fmt(t), _fmt(p), cost, t == p))
    return EvalReport(digit_accuracy(pairs), captcha_accuracy(pairs), per_file, classifier)
