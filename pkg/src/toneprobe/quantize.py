"""k-means codebooks over frame latents.

Fits a codebook with Lloyd's algorithm under k-means++ initialization and
maps frames to discrete symbols by nearest centroid (squared Euclidean).
Everything is deterministic given (data, config): initialization draws
from a seeded generator, iteration is full batch, ties break toward the
lowest centroid index.

Codebooks persist to a small binary file: magic ``SSLK``, u32 version
(= 1), u32 K, u32 D, u64 seed, then K*D float32 centroids row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

SSLK_MAGIC = b"SSLK"
SSLK_VERSION = 1

# centroid-distance work buffers are held to roughly this many doubles
_CHUNK_BUDGET = 4_000_000


class QuantizeError(ValueError):
    """Invalid k-means input or configuration."""


class CodebookFormatError(QuantizeError):
    """SSLK file violates the format; message carries path and byte offset."""

    def __init__(self, path, offset: int, message: str):
        super().__init__(f"{path}: {message} (offset {offset})")
        self.path = str(path)
        self.offset = offset


@dataclass(frozen=True)
class KMeansConfig:
    """Codebook fitting knobs.

    max_fit_frames caps how many frames the fit sees (sampled without
    replacement from the seeded generator); None means use everything.
    """

    k: int = 200
    max_iterations: int = 100
    rel_tolerance: float = 1e-4
    seed: int = 0
    init: str = "kmeanspp"
    max_fit_frames: Optional[int] = None
    restarts: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise QuantizeError(f"k must be >= 1, got {self.k}")
        if self.max_iterations < 1:
            raise QuantizeError("max_iterations must be >= 1")
        if self.rel_tolerance < 0:
            raise QuantizeError("rel_tolerance must be >= 0")
        if self.init != "kmeanspp":
            raise QuantizeError(f"unknown init {self.init!r}")
        if not 0 <= self.seed < 2**64:
            raise QuantizeError("seed must fit in u64")
        if self.max_fit_frames is not None and self.max_fit_frames < self.k:
            raise QuantizeError("max_fit_frames must be >= k")
        if self.restarts < 1:
            raise QuantizeError("restarts must be >= 1")


@dataclass(frozen=True)
class Codebook:
    """K centroids plus fit diagnostics.

    Centroids live in double precision in memory; the file format rounds
    them to float32.  inertia_trace holds the clustering cost once per
    Lloyd iteration (assignment-phase measurement); it is non-increasing.
    A codebook loaded from file carries centroids and seed only.
    """

    centroids: np.ndarray
    seed: int
    inertia: Optional[float] = None
    iterations_run: Optional[int] = None
    inertia_trace: tuple[float, ...] = field(default=())

    def __post_init__(self):
        centroids = np.ascontiguousarray(self.centroids, dtype=np.float64)
        if centroids.ndim != 2 or centroids.shape[0] < 1 or centroids.shape[1] < 1:
            raise QuantizeError(f"centroids must be K x D, got shape {centroids.shape}")
        if not np.isfinite(centroids).all():
            raise QuantizeError("non-finite centroid")
        centroids.setflags(write=False)
        object.__setattr__(self, "centroids", centroids)

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]


def _check_frames(frames, what: str) -> np.ndarray:
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise QuantizeError(f"{what} must be a non-empty 2-d matrix, got shape {frames.shape}")
    if not np.isfinite(frames).all():
        raise QuantizeError(f"non-finite value in {what}")
    return frames


def _nearest(frames: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per frame: (assignments, squared distances).

    Exact squared distances via broadcast subtraction, chunked over rows
    so peak memory stays near _CHUNK_BUDGET doubles.  Matches a per-frame
    loop bit for bit; ties go to the lowest index (argmin semantics).
    """
    n = frames.shape[0]
    k, d = centroids.shape
    assign = np.empty(n, dtype=np.int32)
    dmin = np.empty(n, dtype=np.float64)
    chunk = max(1, _CHUNK_BUDGET // (k * d))
    for lo in range(0, n, chunk):
        x = frames[lo : lo + chunk].astype(np.float64, copy=False)
        dist = np.square(x[:, None, :] - centroids[None, :, :]).sum(axis=2)
        idx = np.argmin(dist, axis=1)
        assign[lo : lo + chunk] = idx
        dmin[lo : lo + chunk] = dist[np.arange(idx.shape[0]), idx]
    return assign, dmin


def _sqdist_to_point(frames: np.ndarray, point: np.ndarray) -> np.ndarray:
    diff = frames.astype(np.float64, copy=False) - point
    return np.einsum("nd,nd->n", diff, diff)


def _kmeanspp_init(frames: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Seeded k-means++: D^2-weighted draws; degenerate mass falls back
    to the lowest-index unchosen point."""
    n = frames.shape[0]
    chosen = np.empty(k, dtype=np.int64)
    chosen[0] = int(rng.integers(n))
    d2 = _sqdist_to_point(frames, frames[chosen[0]].astype(np.float64))
    taken = np.zeros(n, dtype=bool)
    taken[chosen[0]] = True
    for j in range(1, k):
        total = d2.sum()
        if total > 0:
            pick = int(rng.choice(n, p=d2 / total))
        else:
            pick = int(np.flatnonzero(~taken)[0])
        chosen[j] = pick
        taken[pick] = True
        d2 = np.minimum(d2, _sqdist_to_point(frames, frames[pick].astype(np.float64)))
    return frames[chosen].astype(np.float64)


def _fill_empty_clusters(frames, centroids, assign, cost, counts) -> None:
    """Reseed every empty cluster, in place.

    Ascending by cluster index, an empty cluster takes the point farthest
    from its current centroid, drawn from clusters that keep >= 2 members;
    the point is pinned there (cost 0) until the next assignment pass.
    N >= K guarantees a donor always exists.
    """
    worklist = list(np.flatnonzero(counts == 0))
    while worklist:
        c = worklist.pop(0)
        eligible = counts[assign] >= 2
        dist_c = _sqdist_to_point(frames, centroids[c])
        dist_c[~eligible] = -1.0
        p = int(np.argmax(dist_c))
        old = assign[p]
        centroids[c] = frames[p].astype(np.float64)
        assign[p] = c
        cost[p] = 0.0
        counts[old] -= 1
        counts[c] = 1


def _lloyd_run(frames, k, rng, max_iterations, rel_tolerance):
    """One seeded k-means++ init plus Lloyd iterations; rng is consumed
    during initialization only, so successive runs off one generator are
    independent restarts.  Returns (centroids, trace)."""
    centroids = _kmeanspp_init(frames, k, rng)

    assign, cost = _nearest(frames, centroids)
    counts = np.bincount(assign, minlength=k)
    _fill_empty_clusters(frames, centroids, assign, cost, counts)
    trace = [float(cost.sum())]

    for _ in range(max_iterations):
        # update: centroid = mean of members (float64 accumulation)
        sums = np.empty((k, frames.shape[1]), dtype=np.float64)
        for col in range(frames.shape[1]):
            sums[:, col] = np.bincount(assign, weights=frames[:, col], minlength=k)
        centroids = sums / counts[:, None]

        assign, cost = _nearest(frames, centroids)
        counts = np.bincount(assign, minlength=k)
        _fill_empty_clusters(frames, centroids, assign, cost, counts)
        cur = float(cost.sum())
        prev = trace[-1]
        trace.append(cur)
        if cur == 0.0 or (prev - cur) < rel_tolerance * prev:
            break
    return centroids, trace


def kmeans_fit(frames, config: KMeansConfig) -> Codebook:
    """Fit a codebook on pooled frames.

    Lloyd iterations run until the relative drop in clustering cost falls
    below config.rel_tolerance (or cost hits zero, or max_iterations).
    The recorded trace has one cost entry per assignment phase, including
    the initial one; iterations_run counts update+assign cycles.  With
    restarts > 1 the whole procedure repeats off the same seeded stream
    and the lowest-cost run wins (ties to the earliest); the returned
    diagnostics describe the winning run only.
    """
    frames = _check_frames(frames, "frames")
    k = config.k
    rng = np.random.default_rng(config.seed)
    if config.max_fit_frames is not None and frames.shape[0] > config.max_fit_frames:
        keep = rng.choice(frames.shape[0], size=config.max_fit_frames, replace=False)
        frames = frames[np.sort(keep)]
    if frames.shape[0] < k:
        raise QuantizeError(f"need at least k={k} frames, got {frames.shape[0]}")

    centroids, trace = _lloyd_run(
        frames, k, rng, config.max_iterations, config.rel_tolerance
    )
    for _ in range(config.restarts - 1):
        other_centroids, other_trace = _lloyd_run(
            frames, k, rng, config.max_iterations, config.rel_tolerance
        )
        if other_trace[-1] < trace[-1]:
            centroids, trace = other_centroids, other_trace

    return Codebook(
        centroids=centroids,
        seed=config.seed,
        inertia=trace[-1],
        iterations_run=len(trace) - 1,
        inertia_trace=tuple(trace),
    )


def assign_symbols(codebook: Codebook, frames) -> np.ndarray:
    """Map each frame to the index of its nearest centroid (ties: lowest)."""
    frames = _check_frames(frames, "frames")
    if frames.shape[1] != codebook.dim:
        raise QuantizeError(
            f"dimension mismatch: frames are {frames.shape[1]}-d, codebook is {codebook.dim}-d"
        )
    assign, _ = _nearest(frames, codebook.centroids)
    return assign


def inertia(codebook: Codebook, frames) -> float:
    """Sum of squared distances from each frame to its nearest centroid."""
    frames = _check_frames(frames, "frames")
    if frames.shape[1] != codebook.dim:
        raise QuantizeError(
            f"dimension mismatch: frames are {frames.shape[1]}-d, codebook is {codebook.dim}-d"
        )
    _, dmin = _nearest(frames, codebook.centroids)
    return float(dmin.sum())


# ---------------------------------------------------------------------------
# Codebook files

_CB_HEADER = struct.Struct("<4sIIIQ")  # magic, version, K, D, seed


def save_codebook(codebook: Codebook, path) -> None:
    path = Path(path)
    header = _CB_HEADER.pack(
        SSLK_MAGIC, SSLK_VERSION, codebook.k, codebook.dim, codebook.seed
    )
    path.write_bytes(header + codebook.centroids.astype("<f4").tobytes())


def load_codebook(path) -> Codebook:
    """Read an SSLK file.

    Only centroids (at float32 precision) and the seed are stored; fit
    diagnostics do not survive the round trip.
    """
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _CB_HEADER.size:
        raise CodebookFormatError(path, len(data), "truncated header")
    magic, version, k, dim, seed = _CB_HEADER.unpack_from(data, 0)
    if magic != SSLK_MAGIC:
        raise CodebookFormatError(path, 0, f"bad magic {magic!r}")
    if version != SSLK_VERSION:
        raise CodebookFormatError(path, 4, f"unsupported version {version}")
    if k < 1 or dim < 1:
        raise CodebookFormatError(path, 8, f"empty codebook ({k}x{dim})")
    expected = k * dim * 4
    payload = data[_CB_HEADER.size:]
    if len(payload) < expected:
        raise CodebookFormatError(path, _CB_HEADER.size + len(payload), "truncated payload")
    if len(payload) > expected:
        raise CodebookFormatError(path, _CB_HEADER.size + expected, "unexpected trailing data")
    centroids = np.frombuffer(payload, dtype="<f4").reshape(k, dim)
    if not np.isfinite(centroids).all():
        i, j = np.argwhere(~np.isfinite(centroids))[0]
        offset = _CB_HEADER.size + 4 * (int(i) * dim + int(j))
        raise CodebookFormatError(path, offset, f"non-finite centroid at ({i}, {j})")
    return Codebook(centroids=centroids.astype(np.float64), seed=seed)
