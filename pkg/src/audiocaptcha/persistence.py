"""Binary model files.

Layout (little-endian)::

    b"ACSM" | version u8 | section* | crc32 u32

Each section is ``tag (4 bytes) | length u64 | payload``.  The sections
appear in a fixed order: ``HEAD`` (JSON metadata including the feature
configuration and its digest), ``PCA_`` (empty when the model has no
projection), ``CLF_`` (SVM machines or naive Bayes densities) and ``LABL``.
The CRC covers every byte before it.  Reals are stored as raw float64, so a
round trip reproduces predictions bit for bit.
"""
from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .classifiers import BinarySvm, GnbModel, MulticlassSvm
from .decomposition import PcaModel
from .pipeline import LABELS, SolverModel, label_name
from .rasta_plp import FeatureConfig

MAGIC = b"ACSM"
FORMAT_VERSION = 1
SECTIONS = (b"HEAD", b"PCA_", b"CLF_", b"LABL")
_SVM, _GNB = 1, 2


class ModelFileError(ValueError):
    pass


class VersionError(ModelFileError):
    pass


class CorruptModelError(ModelFileError):
    pass


class _Writer:
    def __init__(self):
        self.buf = io.BytesIO()

    def u8(self, v: int):
        self.buf.write(struct.pack("<B", v))

    def i64(self, v: int):
        self.buf.write(struct.pack("<q", v))

    def f64(self, v: float):
        self.buf.write(struct.pack("<d", v))

    def array(self, a, dtype="<f8"):
        a = np.ascontiguousarray(np.asarray(a), dtype=dtype)
        self.buf.write(struct.pack("<B", a.ndim))
        self.buf.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        self.buf.write(a.tobytes())

    def bytes(self) -> bytes:
        return self.buf.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptModelError("model file is truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return struct.unpack("<B", self.take(1))[0]

    def i64(self) -> int:
        return struct.unpack("<q", self.take(8))[0]

    def f64(self) -> float:
        return struct.unpack("<d", self.take(8))[0]

    def array(self, dtype="<f8") -> np.ndarray:
        ndim = self.u8()
        shape = struct.unpack(f"<{ndim}Q", self.take(8 * ndim))
        count = int(np.prod(shape)) if ndim else 1
        raw = self.take(count * np.dtype(dtype).itemsize)
        return np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype[1:])

    def done(self) -> bool:
        return self.pos == len(self.data)


def _header(model: SolverModel) -> bytes:
    meta = {
        "kind": model.kind,
        "penalty": model.penalty,
        "var_fraction": model.var_fraction,
        "feature_cfg": asdict(model.feature_cfg),
        "cfg_sha256": model.feature_cfg.digest(),
    }
    return json.dumps(meta, sort_keys=True).encode()


def _pca(pca: PcaModel | None) -> bytes:
    if pca is None:
        return b""
    w = _Writer()
    w.array(pca.mean)
    w.array(pca.components)
    w.array(pca.eigenvalues)
    w.f64(pca.var_fraction)
    w.f64(pca.total_variance)
    return w.bytes()


def _classifier(clf) -> bytes:
    w = _Writer()
    if isinstance(clf, MulticlassSvm):
        w.u8(_SVM)
        w.f64(clf.gamma)
        w.f64(clf.C)
        w.array(clf.labels, "<i8")
        w.i64(len(clf.machines))
        for m in clf.machines:
            w.i64(m.class_pair[0])
            w.i64(m.class_pair[1])
            w.f64(m.bias)
            w.f64(m.gamma)
            w.f64(m.C)
            w.u8(int(m.converged))
            w.i64(m.iterations)
            w.i64(-1 if m.degenerate_label is None else m.degenerate_label)
            w.array(m.support_vectors)
            w.array(m.dual_coeffs)
    elif isinstance(clf, GnbModel):
        w.u8(_GNB)
        w.array(clf.labels, "<i8")
        w.array(clf.priors)
        w.array(clf.means)
        w.array(clf.variances)
    else:
        raise ModelFileError(f"cannot serialise classifier of type {type(clf).__name__}")
    return w.bytes()


def _labels() -> bytes:
    return json.dumps([[c, label_name(c)] for c in LABELS]).encode()


def model_bytes(model: SolverModel) -> bytes:
    body = io.BytesIO()
    body.write(MAGIC)
    body.write(struct.pack("<B", FORMAT_VERSION))
    for tag, payload in zip(SECTIONS, (_header(model), _pca(model.pca),
                                       _classifier(model.classifier), _labels())):
        body.write(tag)
        body.write(struct.pack("<Q", len(payload)))
        body.write(payload)
    data = body.getvalue()
    return data + struct.pack("<I", zlib.crc32(data))


def save_model(model: SolverModel, path) -> None:
    Path(path).write_bytes(model_bytes(model))


def _read_pca(payload: bytes) -> PcaModel | None:
    if not payload:
        return None
    r = _Reader(payload)
    mean, comps, eig = r.array(), r.array(), r.array()
    out = PcaModel(mean, comps, eig, r.f64(), r.f64())
    if not r.done():
        raise CorruptModelError("trailing bytes in PCA section")
    return out


def _read_classifier(payload: bytes):
    r = _Reader(payload)
    kind = r.u8()
    if kind == _SVM:
        gamma, C = r.f64(), r.f64()
        labels = tuple(int(v) for v in r.array("<i8"))
        machines = []
        for _ in range(r.i64()):
            pair = (r.i64(), r.i64())
            bias, m_gamma, m_C = r.f64(), r.f64(), r.f64()
            converged, iterations, degenerate = bool(r.u8()), r.i64(), r.i64()
            sv, coef = r.array(), r.array()
            machines.append(BinarySvm(sv, coef, bias, m_gamma, m_C, pair, converged, iterations,
                                      None, None if degenerate < 0 else degenerate))
        clf = MulticlassSvm(labels, tuple(machines), gamma, C)
    elif kind == _GNB:
        labels = tuple(int(v) for v in r.array("<i8"))
        clf = GnbModel(labels, r.array(), r.array(), r.array())
    else:
        raise CorruptModelError(f"unknown classifier tag {kind}")
    if not r.done():
        raise CorruptModelError("trailing bytes in classifier section")
    return clf


def parse_model(data: bytes) -> SolverModel:
    if len(data) < len(MAGIC) + 5 or data[: len(MAGIC)] != MAGIC:
        raise CorruptModelError("not a model file (bad magic)")
    version = data[len(MAGIC)]
    if version != FORMAT_VERSION:
        raise VersionError(f"model format version {version}, this build reads {FORMAT_VERSION}")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptModelError("checksum mismatch")

    r = _Reader(body)
    r.take(len(MAGIC) + 1)
    payloads = {}
    for tag in SECTIONS:
        got = r.take(4)
        if got != tag:
            raise CorruptModelError(f"expected section {tag!r}, found {got!r}")
        (length,) = struct.unpack("<Q", r.take(8))
        payloads[tag] = r.take(length)
    if not r.done():
        raise CorruptModelError("trailing bytes after the last section")

    try:
        meta = json.loads(payloads[b"HEAD"])
        cfg = FeatureConfig(**meta["feature_cfg"])
        if cfg.digest() != meta["cfg_sha256"]:
            raise CorruptModelError("feature configuration does not match its recorded hash")
        if json.loads(payloads[b"LABL"]) != [[c, label_name(c)] for c in LABELS]:
            raise CorruptModelError("label table differs from this build")
        return SolverModel(meta["kind"], _read_classifier(payloads[b"CLF_"]),
                           _read_pca(payloads[b"PCA_"]), cfg, meta["penalty"], meta["var_fraction"])
    except ModelFileError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptModelError(f"malformed model file: {exc}") from exc


def load_model(path) -> SolverModel:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ModelFileError(f"cannot read {path}: {exc}") from exc
    return parse_model(data)
