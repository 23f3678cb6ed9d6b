"""Synthetic audio-CAPTCHA corpora.

Each digit is a two-formant surrogate: two tones gliding along a
digit-specific (F1, F2) transition, amplitude-modulated at a digit-specific
rate.  Every render varies the glide timing, F2 weight, modulation depth
and attack around that fixed signature.
CAPTCHAs string 4-6 digits together with gaps and add white noise, a
mains-style hum and voice-like filtered-noise bursts inside the gaps.
"""
from __future__ import annotations

import hashlib
import json
import os
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import butter, sosfilt

from .audio_io import CANONICAL_RATE, AudioClip, write_wav

DIGIT_DURATION_S = 0.4
MAX_CLIP_S = 30.0
MANIFEST_VERSION = 1
DEFAULT_GAPS_S = (0.3, 1.0)
# per-render variation around each digit's fixed signature
RENDER_A2 = (0.2, 1.0)  # F2 weight relative to F1
RENDER_AM_DEPTH = (0.15, 0.6)
RENDER_WARP = 3.0  # glide progress follows u ** w, log w uniform in +-log 3
RENDER_ATTACK_S = (0.005, 0.04)
BURST_S = (0.08, 0.35)  # babble burst length range
BURST_MARGIN_S = 0.08  # clearance between a burst and the nearest digit

# per digit: F1 glide (Hz), F2 glide (Hz), AM rate (Hz)
FORMANTS = {
    0: ((300.0, 600.0), (900.0, 800.0), 2.0),
    1: ((750.0, 350.0), (1100.0, 2400.0), 2.5),
    2: ((350.0, 350.0), (1600.0, 900.0), 3.0),
    3: ((500.0, 750.0), (2400.0, 1700.0), 3.5),
    4: ((700.0, 450.0), (900.0, 1300.0), 4.0),
    5: ((650.0, 300.0), (1300.0, 2700.0), 4.5),
    6: ((300.0, 300.0), (2300.0, 2900.0), 5.0),
    7: ((550.0, 800.0), (1500.0, 1200.0), 5.5),
    8: ((800.0, 500.0), (1900.0, 2300.0), 6.0),
    9: ((400.0, 600.0), (2800.0, 2000.0), 6.5),
}


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class DigitRenderSpec:
    digit: int
    base_seed: int = 0
    duration_s: float = DIGIT_DURATION_S
    sample_rate: int = CANONICAL_RATE


@dataclass(frozen=True)
class NoiseProfile:
    white_snr_db: float = 45.0
    hum_freq_hz: float = 50.0
    hum_amp: float = 3e-4
    babble_amp: float = 0.1

    @classmethod
    def silent(cls) -> "NoiseProfile":
        return cls(white_snr_db=float("inf"), hum_amp=0.0, babble_amp=0.0)


@dataclass(frozen=True)
class CaptchaSpec:
    digits: tuple[int, ...]
    gap_range_s: tuple[float, float] = DEFAULT_GAPS_S
    noise: NoiseProfile = field(default_factory=NoiseProfile)
    seed: int = 0
    sample_rate: int = CANONICAL_RATE
    lead_s: float = 0.3
    tail_s: float = 0.3

    def __post_init__(self):
        object.__setattr__(self, "digits", tuple(int(d) for d in self.digits))
        if not 4 <= len(self.digits) <= 6:
            raise SynthError(f"a CAPTCHA carries 4-6 digits, got {len(self.digits)}")
        if any(not 0 <= d <= 9 for d in self.digits):
            raise SynthError("digits must lie in 0-9")
        lo, hi = self.gap_range_s
        if lo < 0.05 or hi < lo:
            raise SynthError(f"gap range must satisfy 0.05 <= min <= max, got {self.gap_range_s}")


def derive_seed(*parts: int) -> int:
    h = hashlib.sha256(",".join(str(int(p)) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "little")


def render_digit(spec: DigitRenderSpec) -> AudioClip:
    return AudioClip(_digit_waveform(spec), spec.sample_rate)


def _digit_waveform(spec: DigitRenderSpec) -> np.ndarray:
    if spec.digit not in FORMANTS:
        raise SynthError(f"digit must lie in 0-9, got {spec.digit}")
    f1, f2, am = FORMANTS[spec.digit]
    rng = np.random.default_rng(derive_seed(spec.base_seed, spec.digit))
    jitter = 1.0 + rng.uniform(-0.03, 0.03)
    a2 = rng.uniform(*RENDER_A2)
    phase = rng.uniform(0, 2 * np.pi, size=2)
    target_rms = rng.uniform(0.1, 0.25)
    depth = rng.uniform(*RENDER_AM_DEPTH)
    warp = np.exp(rng.uniform(-1.0, 1.0) * np.log(RENDER_WARP))
    attack_s = rng.uniform(*RENDER_ATTACK_S)

    n = int(round(spec.duration_s * spec.sample_rate))
    t = np.arange(n) / spec.sample_rate
    attack = np.clip(t / attack_s, 0.0, 1.0)
    decay = np.cos(0.5 * np.pi * np.clip((t - attack_s) / (spec.duration_s - attack_s), 0.0, 1.0))
    envelope = attack * decay ** 0.5
    # modulation phase is locked to the onset so a digit keeps its temporal shape
    mod = 1.0 + depth * np.sin(2 * np.pi * am * jitter * t)
    carrier = (np.sin(_glide_phase(f1, jitter, warp, t) + phase[0])
               + a2 * np.sin(_glide_phase(f2, jitter, warp, t) + phase[1]))
    x = envelope * mod * carrier
    return x * (target_rms / np.sqrt(np.mean(x * x)))


def _glide_phase(span: tuple[float, float], jitter: float, warp: float, t: np.ndarray) -> np.ndarray:
    """Phase of a tone moving from span[0] to span[1] Hz along (t / dur) ** warp."""
    dt = t[1] - t[0]
    u = (t + dt) / (t[-1] + dt)
    lo, hi = span[0] * jitter, span[1] * jitter
    freq = lo + (hi - lo) * u ** warp
    return 2 * np.pi * np.cumsum(freq) * dt


def _babble(rng: np.random.Generator, n: int, rate: int) -> np.ndarray:
    """Noise through two random formant-like band-passes: a voice-ish burst."""
    x = np.zeros(n)
    for lo, hi, w in ((250.0, 900.0, 1.0), (900.0, 2800.0, rng.uniform(0.4, 1.0))):
        fc = rng.uniform(lo, hi)
        bw = rng.uniform(0.15, 0.35) * fc
        sos = butter(2, [fc - bw / 2, fc + bw / 2], btype="bandpass", fs=rate, output="sos")
        band = sosfilt(sos, rng.standard_normal(n + 400))[400:]
        x += w * band / (np.sqrt(np.mean(band * band)) + 1e-12)
    x /= np.sqrt(np.mean(x * x)) + 1e-12
    return x * np.hanning(n)


@dataclass
class CaptchaParts:
    """Unnormalised components of a mix; tests use them to measure SNR."""

    speech: np.ndarray
    white: np.ndarray
    hum: np.ndarray
    babble: np.ndarray
    gain: float


def synth_captcha_parts(spec: CaptchaSpec):
    rate = spec.sample_rate
    rng = np.random.default_rng(derive_seed(spec.seed, 1))
    seg = int(round(DIGIT_DURATION_S * rate))
    gaps = rng.uniform(*spec.gap_range_s, size=max(len(spec.digits) - 1, 0))
    total_s = spec.lead_s + len(spec.digits) * DIGIT_DURATION_S + gaps.sum() + spec.tail_s
    if total_s > MAX_CLIP_S:
        raise SynthError(f"spec needs a {total_s:.1f} s clip, limit is {MAX_CLIP_S} s")

    onsets_idx = []
    pos = int(round(spec.lead_s * rate))
    for i in range(len(spec.digits)):
        onsets_idx.append(pos)
        pos += seg
        if i < len(gaps):
            pos += int(round(gaps[i] * rate))
    n = pos + int(round(spec.tail_s * rate))

    speech = np.zeros(n)
    for i, (d, start) in enumerate(zip(spec.digits, onsets_idx)):
        speech[start : start + seg] += _digit_waveform(
            DigitRenderSpec(d, digit_seed(spec.seed, i), sample_rate=rate)
        )

    noise = spec.noise
    babble = np.zeros(n)
    if noise.babble_amp > 0:
        # bursts sit inside gaps wide enough to keep them clear of digits
        free = [(0, onsets_idx[0])]
        free += [(a + seg, b) for a, b in zip(onsets_idx, onsets_idx[1:])]
        free.append((onsets_idx[-1] + seg, n))
        margin = int(BURST_MARGIN_S * rate)
        for lo, hi in free:
            room = hi - lo - 2 * margin
            if room < int(BURST_S[0] * rate):
                continue
            length = int(rng.uniform(BURST_S[0], min(BURST_S[1], room / rate)) * rate)
            start = lo + margin + int(rng.integers(0, room - length + 1))
            babble[start : start + length] += noise.babble_amp * _babble(rng, length, rate)

    t = np.arange(n) / rate
    hum = noise.hum_amp * (np.sin(2 * np.pi * noise.hum_freq_hz * t)
                           + 0.3 * np.sin(2 * np.pi * 3 * noise.hum_freq_hz * t))

    white = np.zeros(n)
    if np.isfinite(noise.white_snr_db):
        p_clean = np.mean(speech * speech)
        sigma = np.sqrt(p_clean / 10 ** (noise.white_snr_db / 10))
        w = rng.standard_normal(n)
        white = sigma * w / np.sqrt(np.mean(w * w))

    mix = speech + babble + hum + white
    gain = 0.9 / np.max(np.abs(mix))
    onsets = [i / rate for i in onsets_idx]
    return CaptchaParts(speech, white, hum, babble, gain), onsets


def digit_seed(captcha_seed: int, index: int) -> int:
    return derive_seed(captcha_seed, 2, index)


def synth_captcha(spec: CaptchaSpec) -> tuple[AudioClip, list[int], list[float]]:
    parts, onsets = synth_captcha_parts(spec)
    mix = parts.gain * (parts.speech + parts.babble + parts.hum + parts.white)
    return AudioClip(mix, spec.sample_rate), list(spec.digits), onsets


@dataclass(frozen=True)
class CorpusConfig:
    n_train: int
    n_test: int
    seed: int = 0
    min_digits: int = 4
    max_digits: int = 6
    gap_range_s: tuple[float, float] = DEFAULT_GAPS_S
    noise: NoiseProfile = field(default_factory=NoiseProfile)


def captcha_spec_for(config: CorpusConfig, index: int) -> CaptchaSpec:
    rng = np.random.default_rng(derive_seed(config.seed, 3, index))
    n_digits = int(rng.integers(config.min_digits, config.max_digits + 1))
    digits = tuple(int(d) for d in rng.integers(0, 10, size=n_digits))
    return CaptchaSpec(digits, config.gap_range_s, config.noise, derive_seed(config.seed, 4, index))


def _render_entry(args):
    config, index, out_dir = args
    spec = captcha_spec_for(config, index)
    clip, digits, onsets = synth_captcha(spec)
    name = f"captcha_{index:05d}.wav"
    write_wav(clip, Path(out_dir) / name)
    split = "train" if index < config.n_train else "test"
    return {"path": name, "digits": digits, "onsets_s": [round(o, 6) for o in onsets], "split": split}


def gen_corpus(config: CorpusConfig, out_dir, jobs: int = 1) -> dict:
    """Write WAVs plus ``manifest.json`` into ``out_dir`` and return the manifest."""
    if config.n_train < 1 or config.n_test < 1:
        raise SynthError("n_train and n_test must both be at least 1")
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise SynthError(f"cannot create {out_dir}: {exc}") from exc
    if not os.access(out_dir, os.W_OK):
        raise SynthError(f"{out_dir} is not writable")

    tasks = [(config, i, str(out_dir)) for i in range(config.n_train + config.n_test)]
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(jobs) as pool:
            entries = list(pool.map(_render_entry, tasks, chunksize=8))
    else:
        entries = [_render_entry(t) for t in tasks]

    counts = Counter(d for e in entries if e["split"] == "train" for d in e["digits"])
    manifest = {
        "version": MANIFEST_VERSION,
        "sample_rate": CANONICAL_RATE,
        "entries": entries,
        "counts": {str(d): counts.get(d, 0) for d in range(10)},
    }
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return manifest


def load_manifest(path) -> dict:
    path = Path(path)
    data = json.loads(path.read_text())
    if data.get("version") != MANIFEST_VERSION:
        raise SynthError(f"unsupported manifest version {data.get('version')!r}")
    for e in data["entries"]:
        on = e["onsets_s"]
        if len(on) != len(e["digits"]) or any(b <= a for a, b in zip(on, on[1:])):
            raise SynthError(f"bad onsets for {e['path']}")
    data["root"] = str(path.parent)
    return data
