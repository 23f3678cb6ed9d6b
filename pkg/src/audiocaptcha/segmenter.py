"""Energy-based detection of candidate digit onsets.

The clip's squared samples are smoothed with a centred 100-point running
mean, normalised to a peak of 1 and scanned with a two-threshold rule.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import AudioClip

ENERGY_WINDOW = 100
THETA_START = 1e-5
THETA_END = 1e-3
MIN_CANDIDATE_S = 0.05
SEGMENT_S = 0.4


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EnergyEnvelope:
    values: np.ndarray
    sample_rate: int
    window: int = ENERGY_WINDOW


@dataclass(frozen=True)
class SegmentCandidate:
    start_index: int
    end_index: int
    sample_rate: int

    @property
    def start_s(self) -> float:
        return self.start_index / self.sample_rate

    @property
    def end_s(self) -> float:
        return self.end_index / self.sample_rate


def running_mean(x: np.ndarray, window: int = ENERGY_WINDOW) -> np.ndarray:
    """Centred running mean over ``[i - w//2, i + w - w//2)``, truncated at the edges."""
    n = x.size
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(n)
    lo = np.maximum(idx - window // 2, 0)
    hi = np.minimum(idx + window - window // 2, n)
    return (csum[hi] - csum[lo]) / (hi - lo)


def energy_envelope(clip: AudioClip, window: int = ENERGY_WINDOW) -> EnergyEnvelope:
    x = clip.samples
    if x.size < window:
        raise SegmentationError(f"clip has {x.size} samples, need at least {window}")
    if abs(x.mean()) >= 1e-9:
        raise SegmentationError("clip must be zero-meaned before computing its energy")
    values = np.maximum(running_mean(x * x, window), 0.0)
    return EnergyEnvelope(values, clip.sample_rate, window)


def detect_candidates(
    env: EnergyEnvelope,
    theta_start: float = THETA_START,
    theta_end: float = THETA_END,
    min_duration_s: float = MIN_CANDIDATE_S,
) -> list[SegmentCandidate]:
    """Open a candidate when the normalised envelope exceeds ``theta_start``;
    close it once the envelope drops below ``min(theta_start, theta_end)``."""
    peak = float(np.max(env.values)) if env.values.size else 0.0
    if peak <= 0.0:
        return []
    e = env.values / peak
    close_below = min(theta_start, theta_end)
    above = e > theta_start
    below = e < close_below
    n = e.size
    min_len = int(round(min_duration_s * env.sample_rate))

    out = []
    i = 0
    while i < n:
        hits = np.flatnonzero(above[i:])
        if hits.size == 0:
            break
        start = i + int(hits[0])
        ends = np.flatnonzero(below[start + 1 :])
        end = start + 1 + int(ends[0]) if ends.size else n
        if end - start >= min_len:
            out.append(SegmentCandidate(start, end, env.sample_rate))
        i = end
    return out


def extract_segment(clip: AudioClip, start_index: int, duration_s: float = SEGMENT_S) -> np.ndarray:
    """Fixed-length window starting at ``start_index``; the tail is zero-padded."""
    n = int(round(duration_s * clip.sample_rate))
    if not 0 <= start_index < len(clip):
        raise SegmentationError(f"start index {start_index} outside clip of {len(clip)} samples")
    seg = np.zeros(n)
    piece = clip.samples[start_index : start_index + n]
    seg[: piece.size] = piece
    return seg


def envelope_csv(env: EnergyEnvelope) -> str:
    lines = ["index,value"]
    lines.extend(f"{i},{v:.10g}" for i, v in enumerate(env.values))
    return "\n".join(lines) + "\n"
