"""RASTA-PLP features for a 0.4 s segment: 42 half-overlapping frames x 13 cepstra.

Per frame: Hamming window, 256-point power spectrum, Bark critical-band
integration and log.  Each band's log trajectory is band-pass filtered
across frames (RASTA), then every frame is mapped back through exp,
equal-loudness weighting and cube-root compression to an auditory
spectrum, modelled by 12th-order LPC and converted to cepstra c0..c12.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.signal import lfilter

LOG_FLOOR = 1e-8
RASTA_NUMERATOR = (0.2, 0.1, 0.0, -0.1, -0.2)


class FeatureError(ValueError):
    pass


class LevinsonError(FeatureError):
    def __init__(self, frame: int | None, message: str):
        where = f"frame {frame}" if frame is not None else "autocorrelation"
        super().__init__(f"Levinson-Durbin failed at {where}: {message}")
        self.frame = frame


@dataclass(frozen=True)
class FeatureConfig:
    sample_rate: int = 8000
    segment_len: int = 3200
    n_frames: int = 42
    frame_len: int = 148
    hop: int = 74
    n_fft: int = 256
    n_ceps: int = 13
    lpc_order: int = 12
    compression_exp: float = 0.33
    rasta_pole: float = 0.98

    def __post_init__(self):
        if self.frame_len != 2 * self.hop:
            raise FeatureError("frame_len must be twice the hop (50% overlap)")
        if self.frame_len + (self.n_frames - 1) * self.hop > self.segment_len:
            raise FeatureError("frames do not fit inside the segment")
        if self.n_ceps != self.lpc_order + 1:
            raise FeatureError("n_ceps must equal lpc_order + 1")

    @property
    def n_features(self) -> int:
        return self.n_frames * self.n_ceps

    @property
    def n_bark_bands(self) -> int:
        return int(np.floor(hz_to_bark(self.sample_rate / 2))) + 1

    def digest(self) -> str:
        """SHA-256 of the canonical JSON form; stored with models and dumps."""
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


DEFAULT_CONFIG = FeatureConfig()


def hz_to_bark(f):
    """Zwicker & Terhardt critical-band rate."""
    f = np.asarray(f, dtype=float)
    return 13.0 * np.arctan(0.00076 * f) + 3.5 * np.arctan((f / 7500.0) ** 2)


def bark_to_hz(z):
    grid = np.linspace(0.0, 24000.0, 240001)
    return np.interp(z, hz_to_bark(grid), grid)


@lru_cache(maxsize=8)
def _bark_filterbank(cfg: FeatureConfig) -> tuple[np.ndarray, np.ndarray]:
    """Trapezoids on the Bark axis: flat within 0.4 step of the centre,
    linear to zero at 0.6 step.  Neighbouring filters sum to one."""
    nyq = cfg.sample_rate / 2
    n_bands = cfg.n_bark_bands
    top = float(hz_to_bark(nyq))
    step = top / (n_bands - 1)
    centres = np.arange(n_bands) * step
    freqs = np.arange(cfg.n_fft // 2 + 1) * cfg.sample_rate / cfg.n_fft
    u = np.abs(hz_to_bark(freqs)[None, :] - centres[:, None]) / step
    weights = np.clip((0.6 - u) / 0.2, 0.0, 1.0)
    weights.flags.writeable = False
    return weights, bark_to_hz(centres)


def bark_filterbank(cfg: FeatureConfig = DEFAULT_CONFIG) -> np.ndarray:
    return _bark_filterbank(cfg)[0]


def band_centres_hz(cfg: FeatureConfig = DEFAULT_CONFIG) -> np.ndarray:
    return _bark_filterbank(cfg)[1]


def frame_segment(segment, cfg: FeatureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Hamming-windowed frames, shape (n_frames, frame_len)."""
    x = np.asarray(segment, dtype=float)
    need = cfg.frame_len + (cfg.n_frames - 1) * cfg.hop
    if x.size < need:
        raise FeatureError(f"segment has {x.size} samples, framing needs {need}")
    idx = np.arange(cfg.n_frames)[:, None] * cfg.hop + np.arange(cfg.frame_len)[None, :]
    return x[idx] * np.hamming(cfg.frame_len)


def bark_power_spectrum(frames, cfg: FeatureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Critical-band energies of one frame (1-D) or a stack of frames (2-D)."""
    frames = np.asarray(frames, dtype=float)
    spec = np.abs(np.fft.rfft(frames, n=cfg.n_fft, axis=-1)) ** 2
    return spec @ bark_filterbank(cfg).T


def rasta_filter(log_bands, pole: float = DEFAULT_CONFIG.rasta_pole) -> np.ndarray:
    """Band-pass each column (one band's trajectory over frames).

    The first four frames only fill the FIR delay line and produce zeros,
    so a constant trajectory yields exactly zero output.
    """
    x = np.asarray(log_bands, dtype=float)
    squeeze = x.ndim == 1
    if squeeze:
        x = x[:, None]
    b = np.asarray(RASTA_NUMERATOR)
    y = np.zeros_like(x)
    if x.shape[0] > 4:
        fir = lfilter(b, [1.0], x, axis=0)[4:]
        y[4:] = lfilter([1.0], [1.0, -pole], fir, axis=0)
    return y[:, 0] if squeeze else y


def equal_loudness(freq_hz) -> np.ndarray:
    fsq = np.asarray(freq_hz, dtype=float) ** 2
    return (fsq / (fsq + 1.6e5)) ** 2 * ((fsq + 1.44e6) / (fsq + 9.61e6))


def auditory_spectrum(filtered_log_bands, cfg: FeatureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """exp -> equal-loudness -> power law; edge bands copied from their neighbours."""
    y = np.asarray(filtered_log_bands, dtype=float)
    aud = (equal_loudness(band_centres_hz(cfg)) * np.exp(y)) ** cfg.compression_exp
    aud[..., 0] = aud[..., 1]
    aud[..., -1] = aud[..., -2]
    return aud


def spectrum_autocorrelation(aud, order: int) -> np.ndarray:
    """Autocorrelation lags 0..order from a half-spectrum by inverse DFT."""
    aud = np.asarray(aud, dtype=float)
    nb = aud.shape[-1]
    r = np.fft.irfft(aud, n=2 * (nb - 1), axis=-1)
    return r[..., : order + 1]


def levinson_durbin(r, order: int | None = None):
    """Solve the Toeplitz normal equations.

    ``r`` holds lags 0..p along its last axis (leading axes are batched).
    Returns ``(a, err)`` with ``a[..., 0] == 1`` for A(z) = 1 + sum a_k z^-k.
    """
    r = np.asarray(r, dtype=float)
    p = r.shape[-1] - 1 if order is None else order
    batch = r.shape[:-1]
    a = np.zeros(batch + (p + 1,))
    a[..., 0] = 1.0
    err = r[..., 0].copy()
    for i in range(1, p + 1):
        if np.any(err <= 0):
            bad = np.flatnonzero(np.ravel(err <= 0))
            raise LevinsonError(int(bad[0]) if batch else None, "non-positive prediction error")
        acc = r[..., i] + np.sum(a[..., 1:i] * r[..., i - 1 : 0 : -1], axis=-1)
        k = -acc / err
        prev = a[..., 1:i].copy()
        a[..., 1:i] = prev + k[..., None] * prev[..., ::-1]
        a[..., i] = k
        err = err * (1.0 - k * k)
    if np.any(err <= 0):
        bad = np.flatnonzero(np.ravel(err <= 0))
        raise LevinsonError(int(bad[0]) if batch else None, "non-positive prediction error")
    return a, err


def lpc_to_cepstrum(a, err, n_ceps: int) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    c = np.zeros(a.shape[:-1] + (n_ceps,))
    c[..., 0] = np.log(err)
    p = a.shape[-1] - 1
    for n in range(1, n_ceps):
        acc = a[..., n] if n <= p else 0.0
        for k in range(1, n):
            if n - k <= p:
                acc = acc + (k / n) * c[..., k] * a[..., n - k]
        c[..., n] = -acc
    return c


def cepstra_from_auditory(aud, cfg: FeatureConfig = DEFAULT_CONFIG) -> np.ndarray:
    r = spectrum_autocorrelation(aud, cfg.lpc_order)
    a, err = levinson_durbin(r)
    return lpc_to_cepstrum(a, err, cfg.n_ceps)


def plp_cepstra(filtered_log_bands, cfg: FeatureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """13 cepstra per frame from RASTA-filtered log band energies."""
    return cepstra_from_auditory(auditory_spectrum(filtered_log_bands, cfg), cfg)


def feature_matrix(segment, cfg: FeatureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """(n_frames, n_ceps) cepstra for one segment."""
    bands = bark_power_spectrum(frame_segment(segment, cfg), cfg)
    filtered = rasta_filter(np.log(bands + LOG_FLOOR), cfg.rasta_pole)
    return plp_cepstra(filtered, cfg)


def features_for_segment(segment, cfg: FeatureConfig = DEFAULT_CONFIG) -> np.ndarray:
    """Frame-major flattening: ``v[n_ceps * k + j]`` is coefficient j of frame k."""
    return feature_matrix(segment, cfg).reshape(-1)


def features_for_segments(segments, cfg: FeatureConfig = DEFAULT_CONFIG) -> np.ndarray:
    segments = list(segments)
    if not segments:
        return np.zeros((0, cfg.n_features))
    return np.vstack([features_for_segment(s, cfg) for s in segments])


def feature_csv(matrix, cfg: FeatureConfig = DEFAULT_CONFIG) -> str:
    """Rows = segments, one column per feature; the header pins the config."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    head = f"# rasta-plp frames={cfg.n_frames} ceps={cfg.n_ceps} cfg_sha256={cfg.digest()}"
    cols = ",".join(f"f{k}_c{j}" for k in range(cfg.n_frames) for j in range(cfg.n_ceps))
    rows = [",".join(repr(float(v)) for v in row) for row in matrix]
    return "\n".join([head, cols, *rows]) + "\n"
