"""Codebook training and the product quantizer.

Vector sets are plain 2-D numpy arrays (n, d). Stored centroids, codes and
lookup tables use float32 / uint8; training and assignment run in float64.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

# rows per block when computing point-to-centroid distance matrices
ASSIGN_BLOCK = 16384


@dataclass(frozen=True)
class TrainParams:
    """Lloyd k-means settings shared by every quantizer in the package."""

    iterations: int = 25
    seed: int = 0
    redo: int = 1
    empty_cluster_policy: str = "split-largest"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.redo < 1:
            raise ValueError("redo must be >= 1")
        if self.empty_cluster_policy != "split-largest":
            raise ValueError(f"unknown empty cluster policy {self.empty_cluster_policy!r}")


@dataclass(frozen=True)
class Codebook:
    """k centroids of dimension ``dim``.

    ``history`` holds the k-means objective (sum of squared distances) after
    each assignment step, the last entry being the final assignment.
    """

    centroids: np.ndarray
    mse: float = 0.0
    history: tuple[float, ...] = field(default=(), compare=False)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def assign(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return nearest_centroid(points, self.centroids)


def as_vectors(data, d: int | None = None, name: str = "vectors") -> np.ndarray:
    """Validate and return ``data`` as a C-contiguous float32 (n, d) array."""
    arr = np.asarray(data)
    if arr.ndim == 1 and d is not None and arr.size == 0:
        arr = arr.reshape(0, d)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if arr.shape[1] < 1:
        raise ValueError(f"{name} must have dimension >= 1")
    if d is not None and arr.shape[1] != d:
        raise ValueError(f"dimension mismatch: {name} has d={arr.shape[1]}, expected {d}")
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contain non-finite values")
    return arr


def as_vector(x, d: int, name: str = "vector") -> np.ndarray:
    arr = np.asarray(x)
    if arr.ndim != 1 or arr.shape[0] != d:
        raise ValueError(f"dimension mismatch: {name} has shape {arr.shape}, expected ({d},)")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name} contains non-finite values")
    return arr


def nearest_centroid(points: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of the nearest centroid for every point (lowest index on ties)
    and the squared distance to it, both computed in float64."""
    x = np.asarray(points, dtype=np.float64)
    c = np.asarray(centroids, dtype=np.float64)
    n = x.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    c_norms = np.einsum("ij,ij->i", c, c)
    for start in range(0, n, ASSIGN_BLOCK):
        block = x[start:start + ASSIGN_BLOCK]
        d2 = block @ c.T
        d2 *= -2.0
        d2 += c_norms
        d2 += np.einsum("ij,ij->i", block, block)[:, None]
        lab = np.argmin(d2, axis=1)
        labels[start:start + len(block)] = lab
        # exact distance to the chosen centroid, not the expanded form
        diff = block - c[lab]
        dist[start:start + len(block)] = np.einsum("ij,ij->i", diff, diff)
    return labels, dist


def _split_jitter(rng: np.random.Generator, dim: int, sse: float, count: int) -> np.ndarray:
    # proportional to the cluster's RMS radius: a zero-spread cluster is
    # duplicated exactly rather than perturbed
    scale = 1e-4 * np.sqrt(sse / count) if count else 0.0
    return rng.standard_normal(dim) * scale


def _lloyd(x: np.ndarray, k: int, iterations: int, rng: np.random.Generator):
    n, dim = x.shape
    centroids = x[rng.choice(n, size=k, replace=False)].copy()
    history = []
    for _ in range(iterations):
        labels, dist = nearest_centroid(x, centroids)
        history.append(float(dist.sum()))
        counts = np.bincount(labels, minlength=k)
        sse = np.bincount(labels, weights=dist, minlength=k)
        sums = np.empty((k, dim))
        for j in range(dim):
            sums[:, j] = np.bincount(labels, weights=x[:, j], minlength=k)
        filled = counts > 0
        centroids[filled] = sums[filled] / counts[filled, None]
        # split-largest: an empty centroid is placed next to the most
        # populated one, which itself stays put so the objective cannot grow
        for j in np.flatnonzero(~filled):
            big = int(np.argmax(counts))
            centroids[j] = centroids[big] + _split_jitter(rng, dim, sse[big], counts[big])
            counts[j] = counts[big] // 2
            counts[big] -= counts[j]
            sse[j] = sse[big] = sse[big] / 2
    labels, dist = nearest_centroid(x, centroids)
    history.append(float(dist.sum()))
    return centroids, history


def kmeans_train(points, k: int, params: TrainParams | None = None) -> Codebook:
    """Train a k-centroid codebook with Lloyd's algorithm.

    Initial centroids are k distinct training points drawn with
    ``numpy.random.default_rng(params.seed)``. With ``redo > 1`` the runs
    continue on the same generator and the lowest final objective wins.
    """
    params = params or TrainParams()
    x = np.asarray(points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("insufficient training data: need at least one point")
    if not np.isfinite(x).all():
        raise ValueError("training points contain non-finite values")
    if k < 1:
        raise ValueError("k must be >= 1")
    if x.shape[0] < k:
        raise ValueError(f"insufficient training data: {x.shape[0]} points for k={k}")

    rng = np.random.default_rng(params.seed)
    best = None
    for _ in range(params.redo):
        centroids, history = _lloyd(x, k, params.iterations, rng)
        if best is None or history[-1] < best[1][-1]:
            best = (centroids, history)
    centroids = best[0].astype(np.float32)
    _, dist = nearest_centroid(x, centroids)
    return Codebook(centroids, mse=float(dist.mean()), history=tuple(best[1]))


def subspace_seed(seed: int, j: int) -> int:
    """Seed used for the j-th sub-codebook of a product quantizer."""
    return int(np.random.SeedSequence([seed, j]).generate_state(1)[0])


@dataclass(frozen=True)
class ProductQuantizer:
    """m sub-codebooks of ks centroids over consecutive d/m slices.

    ``centroids`` has shape (m, ks, d/m), float32.
    """

    centroids: np.ndarray
    sub_mse: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self):
        c = np.ascontiguousarray(self.centroids, dtype=np.float32)
        if c.ndim != 3:
            raise ValueError("centroids must have shape (m, ks, d/m)")
        if not 1 <= c.shape[1] <= 256:
            raise ValueError("ks must be in [1, 256] so each index fits in a byte")
        if not np.isfinite(c).all():
            raise ValueError("centroids contain non-finite values")
        object.__setattr__(self, "centroids", c)

    @property
    def m(self) -> int:
        return self.centroids.shape[0]

    @property
    def ks(self) -> int:
        return self.centroids.shape[1]

    @property
    def dsub(self) -> int:
        return self.centroids.shape[2]

    @property
    def d(self) -> int:
        return self.m * self.dsub

    @property
    def bits_per_sub(self) -> int:
        return int(np.ceil(np.log2(self.ks))) if self.ks > 1 else 0

    @property
    def books(self) -> list[Codebook]:
        mse = self.sub_mse or (0.0,) * self.m
        return [Codebook(self.centroids[j], mse[j]) for j in range(self.m)]

    @property
    def mse(self) -> float:
        """Training MSE of the full d-dimensional reconstruction."""
        return float(sum(self.sub_mse))

    def encode_batch(self, vectors) -> np.ndarray:
        """(n, m) uint8 codes; each index minimizes the sub-vector distance."""
        y = as_vectors(vectors, self.d)
        codes = np.empty((y.shape[0], self.m), dtype=np.uint8)
        for j in range(self.m):
            sub = y[:, j * self.dsub:(j + 1) * self.dsub]
            codes[:, j], _ = nearest_centroid(sub, self.centroids[j])
        return codes

    def encode(self, y) -> np.ndarray:
        y = as_vector(y, self.d)
        return self.encode_batch(y[None, :])[0]

    def _check_codes(self, codes: np.ndarray) -> np.ndarray:
        codes = np.asarray(codes)
        if codes.shape[-1] != self.m:
            raise ValueError(f"code length {codes.shape[-1]} does not match m={self.m}")
        if codes.size and (codes.min() < 0 or codes.max() >= self.ks):
            raise ValueError(f"code index out of range for ks={self.ks}")
        return codes.astype(np.intp, copy=False)

    def decode_batch(self, codes) -> np.ndarray:
        codes = self._check_codes(codes)
        if codes.ndim != 2:
            raise ValueError("codes must have shape (n, m)")
        parts = self.centroids[np.arange(self.m), codes]  # (n, m, dsub)
        return parts.reshape(codes.shape[0], self.d)

    def decode(self, code) -> np.ndarray:
        code = self._check_codes(code)
        if code.ndim != 1:
            raise ValueError("code must be one-dimensional")
        return self.centroids[np.arange(self.m), code].reshape(self.d)

    def build_lut(self, x) -> np.ndarray:
        """(m, ks) float32 table of squared distances from each query
        sub-vector to every centroid of the matching codebook."""
        x = as_vector(x, self.d, "query").astype(np.float32).astype(np.float64)
        diff = self.centroids - x.reshape(self.m, 1, self.dsub)
        return np.einsum("jkl,jkl->jk", diff, diff).astype(np.float32)


def pq_train(training, m: int, ks: int = 256, params: TrainParams | None = None) -> ProductQuantizer:
    """Train one k-means codebook per sub-vector slice.

    Sub-codebook j is trained with seed ``subspace_seed(params.seed, j)``.
    """
    params = params or TrainParams()
    x = as_vectors(training, name="training vectors")
    n, d = x.shape
    if m < 1 or d % m:
        raise ValueError(f"dimension not divisible: d={d} by m={m}")
    if not 1 <= ks <= 256:
        raise ValueError("ks must be in [1, 256]")
    if n < ks:
        raise ValueError(f"insufficient training data: {n} vectors for ks={ks}")
    dsub = d // m
    books, mses = [], []
    for j in range(m):
        cb = kmeans_train(x[:, j * dsub:(j + 1) * dsub], ks,
                          replace(params, seed=subspace_seed(params.seed, j)))
        books.append(cb.centroids)
        mses.append(cb.mse)
    return ProductQuantizer(np.stack(books), sub_mse=tuple(mses))


def adc_distance(lut: np.ndarray, code) -> float:
    """Sum of the table entries selected by ``code``, accumulated in float32
    in sub-quantizer order."""
    code = np.asarray(code)
    if lut.ndim != 2 or code.shape != (lut.shape[0],):
        raise ValueError(f"code shape {code.shape} incompatible with table {lut.shape}")
    total = np.float32(0.0)
    for j, i in enumerate(code):
        total = np.float32(total + lut[j, i])
    return float(total)


def adc_distances(lut: np.ndarray, codes: np.ndarray) -> np.ndarray:
    """Vectorized :func:`adc_distance` over an (n, m) code array.

    Same float32 accumulation order as the scalar version, so results are
    bit-identical. Column-major ``codes`` make the per-column gathers cheap.
    """
    m = lut.shape[0]
    if codes.ndim != 2 or codes.shape[1] != m:
        raise ValueError(f"codes shape {codes.shape} incompatible with table {lut.shape}")
    if codes.shape[0] == 0:
        return np.empty(0, dtype=np.float32)
    dist = lut[0].take(codes[:, 0])
    for j in range(1, m):
        dist += lut[j].take(codes[:, j])
    return dist
