"""Mono PCM audio clips and RIFF/WAVE (16-bit PCM) input/output."""
from __future__ import annotations

import struct
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np

CANONICAL_RATE = 8000
PCM_SCALE = 32768.0
_CENTRED = 1e-14


class AudioError(Exception):
    """Base class for audio input/output failures."""


class AudioFileNotFound(AudioError, FileNotFoundError):
    pass


class MalformedHeaderError(AudioError):
    """The RIFF/WAVE container is damaged; ``field`` names the bad header field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"malformed WAV header ({field}): {message}")
        self.field = field


class UnsupportedCodecError(AudioError):
    def __init__(self, field: str, message: str):
        super().__init__(f"unsupported WAV encoding ({field}): {message}")
        self.field = field


class EmptyClipError(AudioError, ValueError):
    pass


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Immutable mono signal with amplitudes in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = CANONICAL_RATE

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64, copy=True).reshape(-1)
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite")
        if x.size and np.max(np.abs(x)) > 1.0:
            raise ValueError("samples must lie in [-1, 1]")
        x.flags.writeable = False
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def _chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack_from("<4sI", data, pos)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size and cid != b"data":
            raise MalformedHeaderError(cid.decode("latin-1"), "chunk truncated")
        yield cid, body
        pos += 8 + size + (size & 1)


def parse_wav(data: bytes) -> AudioClip:
    """Decode an in-memory RIFF/WAVE PCM16 byte string."""
    if len(data) < 12 or data[0:4] != b"RIFF":
        raise MalformedHeaderError("RIFF", "missing RIFF signature")
    if data[8:12] != b"WAVE":
        raise MalformedHeaderError("WAVE", "missing WAVE form type")
    fmt = None
    pcm = None
    for cid, body in _chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise MalformedHeaderError("fmt", "fmt chunk shorter than 16 bytes")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif cid == b"data":
            pcm = body
    if fmt is None:
        raise MalformedHeaderError("fmt", "no fmt chunk")
    if pcm is None:
        raise MalformedHeaderError("data", "no data chunk")
    audio_format, channels, rate, _, block_align, bits = fmt
    if audio_format != 1:
        raise UnsupportedCodecError("audio_format", f"expected 1 (PCM), got {audio_format}")
    if bits != 16:
        raise UnsupportedCodecError("bits_per_sample", f"expected 16, got {bits}")
    if channels not in (1, 2):
        raise UnsupportedCodecError("num_channels", f"expected 1 or 2, got {channels}")
    if rate == 0:
        raise MalformedHeaderError("sample_rate", "sample rate is zero")
    frame = 2 * channels
    pcm = pcm[: len(pcm) - len(pcm) % frame]
    ints = np.frombuffer(pcm, dtype="<i2").astype(np.float64)
    if channels == 2:
        ints = ints.reshape(-1, 2).mean(axis=1)
    return AudioClip(ints / PCM_SCALE, rate)


def read_wav(path) -> AudioClip:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as exc:
        raise AudioFileNotFound(f"no such file: {path}") from exc
    return parse_wav(data)


def wav_bytes(clip: AudioClip) -> bytes:
    """Encode a clip as a 44-byte-header PCM16 mono WAV."""
    ints = np.clip(np.round(clip.samples * PCM_SCALE), -32768, 32767).astype("<i2")
    payload = ints.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(payload), b"WAVE",
        b"fmt ", 16, 1, 1, clip.sample_rate, clip.sample_rate * 2, 2, 16,
        b"data", len(payload),
    )
    return header + payload


def write_wav(clip: AudioClip, path) -> None:
    Path(path).write_bytes(wav_bytes(clip))


def zero_mean(clip: AudioClip) -> AudioClip:
    if len(clip) == 0:
        raise EmptyClipError("cannot remove the mean of an empty clip")
    x = clip.samples
    # a clip that is already centred comes back untouched, which makes the
    # operation exactly idempotent
    for _ in range(3):
        m = x.mean()
        if abs(m) <= _CENTRED:
            break
        x = x - m
    peak = np.max(np.abs(x))
    if peak > 1.0:
        x = x / peak
    return AudioClip(x, clip.sample_rate)


# stdlib reader kept for cross-checking our own parser in tests
def _read_with_wave_module(path) -> tuple[np.ndarray, int]:
    with wave.open(str(path), "rb") as w:
        raw = w.readframes(w.getnframes())
        ints = np.frombuffer(raw, dtype="<i2").astype(np.float64)
        if w.getnchannels() == 2:
            ints = ints.reshape(-1, 2).mean(axis=1)
        return ints / PCM_SCALE, w.getframerate()
