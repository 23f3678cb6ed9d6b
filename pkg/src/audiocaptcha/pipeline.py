"""Corpus -> features -> (PCA) -> classifier, grid search, solving, evaluation."""
from __future__ import annotations

import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .audio_io import AudioClip, read_wav, zero_mean
from .classifiers import (
    GnbModel,
    MulticlassSvm,
    gnb_predict,
    gnb_train,
    ovo_decisions,
    ovo_train,
    rbf_matrix,
    vote,
)
from .decomposition import PcaModel, fit_spectrum, project
from .metrics import EvalReport, build_report
from .rasta_plp import DEFAULT_CONFIG, FeatureConfig, features_for_segments
from .segmenter import (
    SEGMENT_S,
    THETA_END,
    THETA_START,
    SegmentCandidate,
    detect_candidates,
    energy_envelope,
    extract_segment,
)

log = logging.getLogger(__name__)

NOISE = 10
LABELS = tuple(range(11))
NOISE_STRIDE_S = 0.2
NOISE_CLEARANCE_S = 0.2
MERGE_WITHIN_S = 0.2

PENALTIES = (1, 10, 20, 30, 40, 50, 60, 70, 80, 90, 100)
VAR_FRACTIONS = (0.25, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99)

KINDS = ("proposed_svm", "default_svm", "naive_bayes")


class PipelineError(ValueError):
    pass


class StratificationError(PipelineError):
    pass


class SampleRateError(PipelineError):
    pass


class ConfigMismatchError(PipelineError):
    pass


def label_name(label: int) -> str:
    return "NOISE" if label == NOISE else str(label)


def default_jobs() -> int:
    return os.cpu_count() or 1


def _map(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(min(jobs, len(items))) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# training table


@dataclass(eq=False)
class TrainingTable:
    features: np.ndarray
    labels: np.ndarray
    provenance: list[tuple[str, int]]  # (file path, start sample)

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.shape[0] != self.labels.size or self.labels.size != len(self.provenance):
            raise PipelineError("features, labels and provenance disagree in length")
        if not np.all(np.isfinite(self.features)):
            raise PipelineError("training features must be finite")

    def __len__(self) -> int:
        return self.labels.size

    def subset(self, idx) -> "TrainingTable":
        idx = np.asarray(idx, dtype=int)
        return TrainingTable(self.features[idx], self.labels[idx], [self.provenance[i] for i in idx])

    def class_counts(self) -> dict[int, int]:
        return {int(c): int((self.labels == c).sum()) for c in LABELS}


def noise_starts(duration_s: float, onsets_s: Sequence[float], stride_s: float = NOISE_STRIDE_S,
                 clearance_s: float = NOISE_CLEARANCE_S, segment_s: float = SEGMENT_S) -> list[float]:
    """Window starts inside the gaps: at least ``clearance_s`` from every digit
    interval, strided from the beginning of each gap, window fully inside the clip."""
    intervals = sorted((o, o + segment_s) for o in onsets_s)
    stretches = []
    lo = 0.0
    for a, b in intervals:
        stretches.append((lo, a - clearance_s))
        lo = b + clearance_s
    stretches.append((lo, duration_s - segment_s))
    out = []
    eps = 1e-9
    for lo, hi in stretches:
        hi = min(hi, duration_s - segment_s)
        s = lo
        while s <= hi + eps:
            if all(s <= a - clearance_s + eps or s >= b + clearance_s - eps for a, b in intervals):
                out.append(round(s, 6))
            s += stride_s
    return out


def _check_rate(clip: AudioClip, cfg: FeatureConfig, where: str):
    if clip.sample_rate != cfg.sample_rate:
        raise SampleRateError(f"{where}: sample rate {clip.sample_rate} Hz, expected {cfg.sample_rate} Hz")


def _entry_rows(args):
    root, entry, cfg = args
    path = str(Path(root) / entry["path"])
    clip = read_wav(path)
    _check_rate(clip, cfg, path)
    clip = zero_mean(clip)
    rate = clip.sample_rate
    starts, labels = [], []
    for d, onset in zip(entry["digits"], entry["onsets_s"]):
        idx = int(round(onset * rate))
        if not 0 <= idx < len(clip):
            raise PipelineError(f"{entry['path']}: onset {onset} s lies outside the clip")
        starts.append(idx)
        labels.append(int(d))
    for s in noise_starts(clip.duration, entry["onsets_s"], segment_s=cfg.segment_len / rate):
        starts.append(int(round(s * rate)))
        labels.append(NOISE)
    segs = [extract_segment(clip, s, cfg.segment_len / rate) for s in starts]
    feats = features_for_segments(segs, cfg)
    return feats, labels, [(entry["path"], s) for s in starts]


def build_training_table(manifest: dict, split: str = "train", cfg: FeatureConfig = DEFAULT_CONFIG,
                         jobs: int = 1) -> TrainingTable:
    entries = [e for e in manifest.get("entries", []) if split is None or e["split"] == split]
    if not entries:
        raise PipelineError(f"manifest has no {split!r} entries")
    root = manifest.get("root", ".")
    parts = _map(_entry_rows, [(root, e, cfg) for e in entries], jobs)
    feats = np.vstack([p[0] for p in parts])
    labels = [lab for p in parts for lab in p[1]]
    prov = [pr for p in parts for pr in p[2]]
    return TrainingTable(feats, labels, prov)


# --------------------------------------------------------------------------
# cross-validation


@dataclass(frozen=True)
class GridConfig:
    penalties: tuple[float, ...] = PENALTIES
    var_fractions: tuple[float, ...] = VAR_FRACTIONS
    folds: int = 4
    gamma: float | None = None  # None -> 1 / n_components

    def __post_init__(self):
        if self.folds < 2:
            raise PipelineError("need at least two folds")
        if not self.penalties or not self.var_fractions:
            raise PipelineError("grid must not be empty")


def stratified_folds(labels, folds: int, seed: int) -> np.ndarray:
    """Fold id per row: per-class seeded shuffle, then round-robin."""
    labels = np.asarray(labels, dtype=int)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(labels.size, dtype=int)
    counter = 0
    for c in sorted(set(labels.tolist())):
        idx = np.flatnonzero(labels == c)
        if idx.size < folds:
            raise StratificationError(
                f"class {label_name(c)} has {idx.size} rows, fewer than {folds} folds")
        idx = idx[rng.permutation(idx.size)]
        fold_of[idx] = (counter + np.arange(idx.size)) % folds
        counter += idx.size
    return fold_of


@dataclass
class GridReport:
    penalties: tuple[float, ...]
    var_fractions: tuple[float, ...]
    accuracy: np.ndarray  # (len(var_fractions), len(penalties))
    best_penalty: float
    best_var_fraction: float
    folds: int
    seed: int

    @property
    def best_accuracy(self) -> float:
        i = self.var_fractions.index(self.best_var_fraction)
        j = self.penalties.index(self.best_penalty)
        return float(self.accuracy[i, j])

    def cells(self) -> int:
        return int(self.accuracy.size)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("PCAVar," + ",".join(_num(c) for c in self.penalties) + "\n")
        for v, row in zip(self.var_fractions, self.accuracy):
            buf.write(_num(v) + "," + ",".join(f"{a:.4f}" for a in row) + "\n")
        return buf.getvalue()


def _num(x: float) -> str:
    return f"{x:g}"


def _fold_task(args):
    table, fold_of, fold, grid = args
    train = fold_of != fold
    Xtr, ytr = table.features[train], table.labels[train]
    Xte, yte = table.features[~train], table.labels[~train]
    spectrum = fit_spectrum(Xtr)
    out = np.zeros((len(grid.var_fractions), len(grid.penalties)))
    for vi, var in enumerate(grid.var_fractions):
        pca = spectrum.truncate(var)
        Ztr, Zte = project(pca, Xtr), project(pca, Xte)
        gamma = grid.gamma or 1.0 / pca.n_components
        Ktr = rbf_matrix(Ztr, Ztr, gamma)
        Kte = rbf_matrix(Zte, Ztr, gamma)
        for ci, C in enumerate(grid.penalties):
            model = ovo_train(Ztr, ytr, C, gamma, all_labels=LABELS, kernel=Ktr)
            pred = vote(model, ovo_decisions(model, Zte, kernel_to_train=Kte))
            out[vi, ci] = float(np.mean(pred == yte))
        log.info("fold %d var %s done: %s", fold, var, np.round(out[vi], 4).tolist())
    return out


def cross_validate(table: TrainingTable, grid: GridConfig = GridConfig(), seed: int = 0,
                   jobs: int = 1) -> GridReport:
    fold_of = stratified_folds(table.labels, grid.folds, seed)
    per_fold = _map(_fold_task, [(table, fold_of, f, grid) for f in range(grid.folds)], jobs)
    acc = np.mean(per_fold, axis=0)
    best = None
    for ci in np.argsort(grid.penalties, kind="stable"):
        for vi in np.argsort(grid.var_fractions, kind="stable"):
            if best is None or acc[vi, ci] > acc[best]:
                best = (vi, ci)
    return GridReport(tuple(grid.penalties), tuple(grid.var_fractions), acc,
                      grid.penalties[best[1]], grid.var_fractions[best[0]], grid.folds, seed)


# --------------------------------------------------------------------------
# final models


@dataclass(frozen=True, eq=False)
class SolverModel:
    kind: str
    classifier: MulticlassSvm | GnbModel
    pca: PcaModel | None
    feature_cfg: FeatureConfig = DEFAULT_CONFIG
    penalty: float | None = None
    var_fraction: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PipelineError(f"unknown classifier kind {self.kind!r}")
        want = self.pca.n_components if self.pca is not None else self.feature_cfg.n_features
        if self.pca is not None and self.pca.input_dim != self.feature_cfg.n_features:
            raise PipelineError("PCA input dimension does not match the feature config")
        have = self.classifier.dim
        if have != -1 and have != want:
            raise PipelineError(f"classifier expects {have} inputs, pipeline provides {want}")

    @property
    def input_dim(self) -> int:
        return self.pca.n_components if self.pca is not None else self.feature_cfg.n_features

    def transform(self, features) -> np.ndarray:
        features = np.atleast_2d(np.asarray(features, dtype=float))
        return project(self.pca, features) if self.pca is not None else features

    def classify(self, features) -> np.ndarray:
        Z = self.transform(features)
        if Z.shape[0] == 0:
            return np.zeros(0, dtype=int)
        if isinstance(self.classifier, GnbModel):
            return np.atleast_1d(gnb_predict(self.classifier, Z))
        return vote(self.classifier, ovo_decisions(self.classifier, Z))


def train_final(table: TrainingTable, kind: str = "proposed_svm", penalty: float = 50.0,
                var_fraction: float | None = 0.9, gamma: float | None = None,
                cfg: FeatureConfig = DEFAULT_CONFIG) -> SolverModel:
    if kind == "proposed_svm":
        if var_fraction is None:
            raise PipelineError("proposed_svm needs a PCA variance fraction")
        pca = fit_spectrum(table.features).truncate(var_fraction)
        Z = project(pca, table.features)
        clf = ovo_train(Z, table.labels, penalty, gamma or 1.0 / pca.n_components, all_labels=LABELS)
        return SolverModel(kind, clf, pca, cfg, float(penalty), float(var_fraction))
    if kind == "default_svm":
        d = table.features.shape[1]
        clf = ovo_train(table.features, table.labels, 1.0, gamma or 1.0 / d, all_labels=LABELS)
        return SolverModel(kind, clf, None, cfg, 1.0, None)
    if kind == "naive_bayes":
        return SolverModel(kind, gnb_train(table.features, table.labels), None, cfg)
    raise PipelineError(f"unknown classifier kind {kind!r}")


def per_class_accuracy(model: SolverModel, table: TrainingTable) -> dict[str, float]:
    """Resubstitution accuracy per class (the model scored on its own training rows)."""
    pred = model.classify(table.features)
    out = {}
    for c in LABELS:
        mask = table.labels == c
        if mask.any():
            out[label_name(c)] = float(np.mean(pred[mask] == c))
    return out


# --------------------------------------------------------------------------
# solving


@dataclass
class SolveTrace:
    candidates: list[SegmentCandidate] = field(default_factory=list)
    labels: list[int] = field(default_factory=list)
    digits: list[int] = field(default_factory=list)


def merge_detections(starts_s: Sequence[float], labels: Sequence[int],
                     within_s: float = MERGE_WITHIN_S) -> list[int]:
    """Drop noise labels and fuse repeated digits whose windows overlap by more
    than ``0.4 s - within_s``."""
    out: list[int] = []
    last_start = None
    for s, lab in zip(starts_s, labels):
        if lab == NOISE:
            continue
        if out and out[-1] == lab and last_start is not None and s - last_start < within_s:
            last_start = s
            continue
        out.append(int(lab))
        last_start = s
    return out


def solve_trace(model: SolverModel, clip: AudioClip, cfg: FeatureConfig = DEFAULT_CONFIG,
                theta_start: float = THETA_START, theta_end: float = THETA_END) -> SolveTrace:
    if model.feature_cfg.digest() != cfg.digest():
        raise ConfigMismatchError("model was trained with a different feature configuration")
    _check_rate(clip, cfg, "solve")
    if len(clip) < 100:
        return SolveTrace()
    clip = zero_mean(clip)
    cands = detect_candidates(energy_envelope(clip), theta_start, theta_end)
    if not cands:
        return SolveTrace()
    seg_s = cfg.segment_len / clip.sample_rate
    feats = features_for_segments([extract_segment(clip, c.start_index, seg_s) for c in cands], cfg)
    labels = [int(v) for v in model.classify(feats)]
    digits = merge_detections([c.start_s for c in cands], labels)
    return SolveTrace(cands, labels, digits)


def solve(model: SolverModel, clip: AudioClip, cfg: FeatureConfig = DEFAULT_CONFIG,
          theta_start: float = THETA_START, theta_end: float = THETA_END) -> list[int]:
    return solve_trace(model, clip, cfg, theta_start, theta_end).digits


def _solve_entry(args):
    model, root, entry, solver = args
    clip = read_wav(Path(root) / entry["path"])
    return entry["path"], entry["digits"], solver(model, clip)


def evaluate(model, manifest: dict, split: str = "test", jobs: int = 1,
             solver: Callable[[object, AudioClip], Sequence[int]] = solve) -> EvalReport:
    entries = [e for e in manifest.get("entries", []) if e["split"] == split]
    if not entries:
        raise PipelineError(f"manifest has no {split!r} entries")
    root = manifest.get("root", ".")
    records = _map(_solve_entry, [(model, root, e, solver) for e in entries], jobs)
    kind = getattr(model, "kind", "")
    return build_report(records, kind)
