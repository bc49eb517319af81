"""Vector files (fvecs/bvecs/ivecs), synthetic data, and index/quantizer persistence.

Vector files (.fvecs / .bvecs / .ivecs) are a sequence of records, each a
little-endian int32 dimension followed by d float32, uint8 or int32 values.

Quantizers and indexes share one container: ``b"PQRR"``, a version byte,
d, m, ks as little-endian uint32, the first-stage centroids as float32, then
zero or more tagged sections:

``RQNT``  refinement quantizer, a nested quantizer block
``COAR``  coarse codebook: c (uint32), c*d float32
``CODE``  ADC codes: n (uint64), n*m bytes in id order
``LIST``  inverted lists: c list lengths (uint64), then per list the
          (id uint32, m code bytes) entries
``RCOD``  refinement codes: m' (uint32), n*m' bytes in id order
"""

from __future__ import annotations

import os
import struct
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .adc import AdcIndex
from .ivf import IvfIndex
from .quant import Codebook, ProductQuantizer, as_vectors

MAGIC = b"PQRR"
VERSION = 1

KINDS = {
    "fvecs": np.dtype("<f4"),
    "bvecs": np.dtype("u1"),
    "ivecs": np.dtype("<i4"),
}


class CorruptFileError(ValueError):
    pass


def kind_of(path, kind: str | None = None) -> str:
    kind = kind or Path(path).suffix.lstrip(".")
    if kind not in KINDS:
        raise ValueError(f"unknown vector file kind {kind!r}; expected one of {sorted(KINDS)}")
    return kind


@contextmanager
def atomic_write(path):
    """Open a temp file next to ``path`` and rename it into place on success."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            yield f
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# -- vector files -------------------------------------------------------------

@dataclass(frozen=True)
class DatasetFile:
    path: Path
    kind: str
    d: int
    n: int

    @property
    def record_size(self) -> int:
        return 4 + self.d * KINDS[self.kind].itemsize


def inspect_vectors(path, kind: str | None = None) -> DatasetFile:
    """Header-level description of a vector file; checks the size invariant."""
    kind = kind_of(path, kind)
    size = os.path.getsize(path)
    if size == 0:
        return DatasetFile(Path(path), kind, 0, 0)
    if size < 4:
        raise CorruptFileError(f"corrupt file {path}: truncated header")
    with open(path, "rb") as f:
        (d,) = struct.unpack("<i", f.read(4))
    if d < 1:
        raise CorruptFileError(f"corrupt file {path}: invalid dimension {d}")
    rec = 4 + d * KINDS[kind].itemsize
    if size % rec:
        raise CorruptFileError(f"corrupt file {path}: size {size} is not a multiple of record size {rec}")
    return DatasetFile(Path(path), kind, d, size // rec)


def _decode_records(raw: np.ndarray, info: DatasetFile) -> np.ndarray:
    recs = raw.reshape(-1, info.record_size)
    dims = recs[:, :4].copy().view("<i4").ravel()
    if np.any(dims != info.d):
        raise CorruptFileError(f"corrupt file {info.path}: inconsistent record dimension")
    payload = np.ascontiguousarray(recs[:, 4:]).view(KINDS[info.kind])
    if info.kind == "bvecs":
        return payload.astype(np.float32)
    return payload.astype(KINDS[info.kind].newbyteorder("="))


def read_vectors(path, kind: str | None = None, start: int = 0, stop: int | None = None) -> np.ndarray:
    """Records [start, stop) as an (n, d) array.

    fvecs and bvecs give float32 (bytes widened exactly); ivecs gives int32.
    Every record header in the range is checked.
    """
    info = inspect_vectors(path, kind)
    stop = info.n if stop is None else min(stop, info.n)
    start = min(max(start, 0), stop)
    count = stop - start
    out_dtype = np.int32 if info.kind == "ivecs" else np.float32
    if count == 0:
        return np.empty((0, info.d), dtype=out_dtype)
    raw = np.fromfile(path, dtype=np.uint8, count=count * info.record_size,
                      offset=start * info.record_size)
    if raw.size != count * info.record_size:
        raise CorruptFileError(f"corrupt file {path}: short read")
    return _decode_records(raw, info)


def iter_vectors(path, kind: str | None = None, chunk: int = 65536):
    """Yield (start, block) pairs without loading the whole file."""
    info = inspect_vectors(path, kind)
    with open(path, "rb") as f:
        for start in range(0, info.n, chunk):
            count = min(chunk, info.n - start)
            raw = np.frombuffer(f.read(count * info.record_size), dtype=np.uint8)
            if raw.size != count * info.record_size:
                raise CorruptFileError(f"corrupt file {path}: short read")
            yield start, _decode_records(raw, info)


def encode_vectors(data, kind: str) -> bytes:
    arr = np.asarray(data)
    if arr.ndim != 2 or arr.shape[1] < 1:
        raise ValueError("vectors must be a 2-D array with d >= 1")
    n, d = arr.shape
    dtype = KINDS[kind]
    if kind == "bvecs":
        if arr.size and (not np.isfinite(arr).all() or arr.min() < 0 or arr.max() > 255
                         or np.any(arr != np.round(arr))):
            raise ValueError("byte-kind overflow: values must be integers in [0, 255]")
    elif kind == "ivecs":
        if arr.size and (np.any(arr != np.round(arr)) or arr.min() < -2**31 or arr.max() >= 2**31):
            raise ValueError("integer-kind overflow: values must fit in int32")
    payload = arr.astype(dtype)
    recs = np.empty((n, 4 + d * dtype.itemsize), dtype=np.uint8)
    recs[:, :4] = np.frombuffer(struct.pack("<i", d), dtype=np.uint8)
    recs[:, 4:] = payload.view(np.uint8).reshape(n, d * dtype.itemsize)
    return recs.tobytes()


def write_vectors(data, path, kind: str | None = None):
    kind = kind_of(path, kind)
    blob = encode_vectors(data, kind)
    with atomic_write(path) as f:
        f.write(blob)


def generate_synthetic(n: int, d: int, clusters: int = 1024, seed: int = 0,
                       spread: float = 1.0, decay: float = 0.0, return_params: bool = False):
    """Seeded Gaussian mixture used as a desk-scale stand-in for descriptor corpora.

    Cluster centers are drawn from N(0, spread^2 I). A point is its center
    plus Gaussian noise with per-dimension standard deviation (i+1)^-decay,
    the dimensions shuffled independently per cluster. The default
    ``decay=0`` gives isotropic unit-variance clusters.

    Centers and scales are drawn before the points, so they depend only on
    (d, clusters, seed), and the first rows do not depend on n.
    """
    if n < 0 or d < 1 or clusters < 1:
        raise ValueError("need n >= 0, d >= 1, clusters >= 1")
    rng = np.random.default_rng(seed)
    centers = rng.normal(0.0, spread, size=(clusters, d))
    base_scale = (np.arange(d) + 1.0) ** -decay
    scales = np.stack([rng.permutation(base_scale) for _ in range(clusters)])
    # labels and noise come from separate child streams so prefixes are stable
    label_rng, noise_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    data = np.empty((n, d), dtype=np.float32)
    block = 65536
    for start in range(0, n, block):
        count = min(block, n - start)
        lab = label_rng.integers(0, clusters, size=count)
        data[start:start + count] = centers[lab] + noise_rng.standard_normal((count, d)) * scales[lab]
    if return_params:
        return data, centers, scales
    return data


# -- quantizer / index containers ---------------------------------------------

def _pq_block(pq: ProductQuantizer) -> bytes:
    return (MAGIC + struct.pack("<B3I", VERSION, pq.d, pq.m, pq.ks)
            + pq.centroids.astype("<f4").tobytes())


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, size: int) -> bytes:
        if size < 0 or self.pos + size > len(self.data):
            raise CorruptFileError(f"corrupt file {self.path}: truncated")
        out = self.data[self.pos:self.pos + size]
        self.pos += size
        return out

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype, count: int) -> np.ndarray:
        dtype = np.dtype(dtype)
        return np.frombuffer(self.take(count * dtype.itemsize), dtype=dtype)

    def done(self) -> bool:
        return self.pos == len(self.data)


def _read_pq(r: _Reader) -> ProductQuantizer:
    if r.take(4) != MAGIC:
        raise CorruptFileError(f"corrupt file {r.path}: bad magic")
    version, d, m, ks = r.unpack("<B3I")
    if version != VERSION:
        raise CorruptFileError(f"corrupt file {r.path}: unsupported version {version}")
    if m < 1 or d % m or not 1 <= ks <= 256:
        raise CorruptFileError(f"corrupt file {r.path}: invalid header d={d} m={m} ks={ks}")
    cents = r.array("<f4", m * ks * (d // m)).reshape(m, ks, d // m)
    return ProductQuantizer(cents.astype(np.float32))


def quantizer_bytes(pq: ProductQuantizer, refine: ProductQuantizer | None = None,
                    coarse: Codebook | None = None) -> bytes:
    out = [_pq_block(pq)]
    if coarse is not None:
        out += [b"COAR", struct.pack("<I", coarse.k), coarse.centroids.astype("<f4").tobytes()]
    if refine is not None:
        out += [b"RQNT", _pq_block(refine)]
    return b"".join(out)


def index_bytes(index: AdcIndex | IvfIndex) -> bytes:
    """Serialized index. Per-vector payload is m code bytes (+4 id bytes for
    IVF) (+m' refinement bytes)."""
    pq = index.pq
    if isinstance(index, IvfIndex):
        out = [quantizer_bytes(pq, coarse=index.coarse)]
        entries = np.empty((index.n, 4 + pq.m), dtype=np.uint8)
        entries[:, :4] = index.ids.astype("<u4").view(np.uint8).reshape(-1, 4)
        entries[:, 4:] = index.codes
        out += [b"LIST", index.list_sizes.astype("<u8").tobytes(), entries.tobytes()]
    else:
        out = [quantizer_bytes(pq), b"CODE", struct.pack("<Q", index.n),
               np.ascontiguousarray(index.codes).tobytes()]
    if index.refine is not None:
        out += [b"RQNT", _pq_block(index.refine), b"RCOD",
                struct.pack("<I", index.refine.m), np.ascontiguousarray(index.refine_codes).tobytes()]
    return b"".join(out)


@dataclass
class Model:
    """Trained quantizers as stored by the ``train`` command."""

    pq: ProductQuantizer
    refine: ProductQuantizer | None = None
    coarse: Codebook | None = None


def _parse(data: bytes, path):
    r = _Reader(data, path)
    pq = _read_pq(r)
    found = {}
    while not r.done():
        tag = r.take(4)
        if tag in found:
            raise CorruptFileError(f"corrupt file {path}: duplicate section {tag!r}")
        if tag == b"COAR":
            (c,) = r.unpack("<I")
            found[tag] = Codebook(r.array("<f4", c * pq.d).reshape(c, pq.d).astype(np.float32))
        elif tag == b"RQNT":
            found[tag] = _read_pq(r)
        elif tag == b"CODE":
            (n,) = r.unpack("<Q")
            found[tag] = r.array(np.uint8, n * pq.m).reshape(n, pq.m)
        elif tag == b"LIST":
            if b"COAR" not in found:
                raise CorruptFileError(f"corrupt file {path}: LIST before COAR")
            sizes = r.array("<u8", found[b"COAR"].k).astype(np.int64)
            n = int(sizes.sum())
            entries = r.array(np.uint8, n * (4 + pq.m)).reshape(n, 4 + pq.m)
            ids = np.ascontiguousarray(entries[:, :4]).view("<u4").ravel()
            found[tag] = (ids, entries[:, 4:], sizes)
        elif tag == b"RCOD":
            if b"CODE" in found:
                n = len(found[b"CODE"])
            elif b"LIST" in found:
                n = len(found[b"LIST"][0])
            else:
                raise CorruptFileError(f"corrupt file {path}: refinement codes before index")
            (mr,) = r.unpack("<I")
            found[tag] = (mr, r.array(np.uint8, n * mr))
        else:
            raise CorruptFileError(f"corrupt file {path}: unknown section {tag!r}")
    return pq, found


def _attach_refine(index, found, path):
    if b"RCOD" not in found:
        if b"RQNT" in found:
            raise CorruptFileError(f"corrupt file {path}: refinement quantizer without codes")
        return index
    if b"RQNT" not in found:
        raise CorruptFileError(f"corrupt file {path}: refinement codes without quantizer")
    mr, raw = found[b"RCOD"]
    rq = found[b"RQNT"]
    if mr != rq.m:
        raise CorruptFileError(f"corrupt file {path}: refinement code width mismatch")
    codes = raw.reshape(index.n, mr)
    if codes.size and codes.max() >= rq.ks:
        raise CorruptFileError(f"corrupt file {path}: refinement code out of range")
    index.refine, index.refine_codes = rq, codes.copy()
    return index


def save_model(model: Model, path):
    with atomic_write(path) as f:
        f.write(quantizer_bytes(model.pq, model.refine, model.coarse))


def load_model(path) -> Model:
    pq, found = _parse(Path(path).read_bytes(), path)
    extra = set(found) - {b"COAR", b"RQNT"}
    if extra:
        raise ValueError(f"{path} is an index, not a model file")
    return Model(pq, found.get(b"RQNT"), found.get(b"COAR"))


def save_quantizer(pq: ProductQuantizer, path):
    save_model(Model(pq), path)


def load_quantizer(path) -> ProductQuantizer:
    return load_model(path).pq


def save_index(index: AdcIndex | IvfIndex, path):
    with atomic_write(path) as f:
        f.write(index_bytes(index))


def load_index(path) -> AdcIndex | IvfIndex:
    pq, found = _parse(Path(path).read_bytes(), path)
    if b"CODE" in found:
        codes = found[b"CODE"]
        if codes.size and codes.max() >= pq.ks:
            raise CorruptFileError(f"corrupt file {path}: code out of range")
        index = AdcIndex(pq, codes.copy())
    elif b"LIST" in found:
        ids, codes, sizes = found[b"LIST"]
        n = len(ids)
        if n and (ids.max() >= n or len(np.unique(ids)) != n):
            raise CorruptFileError(f"corrupt file {path}: list ids are not a partition of 0..n-1")
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        index = IvfIndex(found[b"COAR"], pq, ids.copy(), codes.copy(), offsets)
    else:
        raise CorruptFileError(f"corrupt file {path}: no index section")
    return _attach_refine(index, found, path)


def save_groundtruth(gt, ids_path, dists_path=None):
    write_vectors(gt.ids, ids_path, "ivecs")
    if dists_path is not None:
        write_vectors(gt.dists, dists_path, "fvecs")


def load_groundtruth(ids_path, dists_path=None):
    from .evaluation import GroundTruth

    ids = read_vectors(ids_path, "ivecs")
    dists = read_vectors(dists_path, "fvecs") if dists_path is not None else None
    if dists is not None and dists.shape != ids.shape:
        raise ValueError("ground-truth id and distance files disagree in shape")
    return GroundTruth(ids, dists)
