"""k-means fitting, symbol assignment, codebook file round-trips."""

import struct

import numpy as np
import pytest

from toneprobe.quantize import (
    Codebook,
    CodebookFormatError,
    KMeansConfig,
    QuantizeError,
    assign_symbols,
    inertia,
    kmeans_fit,
    load_codebook,
    save_codebook,
)

CB_HEADER = struct.Struct("<4sIIIQ")


def loop_assign(centroids, frames):
    """Per-frame scalar oracle for nearest-centroid assignment."""
    out = []
    for frame in frames.astype(np.float64):
        dist = ((centroids.astype(np.float64) - frame) ** 2).sum(axis=1)
        out.append(int(np.argmin(dist)))
    return np.asarray(out, dtype=np.int32)


def brute_force_two_partition(points):
    """Exhaustive minimum-inertia 2-partition of <= 16 points."""
    points = points.astype(np.float64)
    n = len(points)
    best_cost, best_parts = np.inf, None
    for mask in range(1, 2**n - 1):
        in_a = np.array([(mask >> i) & 1 == 1 for i in range(n)])
        cost = 0.0
        for group in (points[in_a], points[~in_a]):
            cost += ((group - group.mean(axis=0)) ** 2).sum()
        if cost < best_cost:
            best_cost = cost
            best_parts = frozenset(
                [frozenset(np.flatnonzero(in_a).tolist()), frozenset(np.flatnonzero(~in_a).tolist())]
            )
    return best_cost, best_parts


# ---------------------------------------------------------------------------
# Fitting


def test_k1_centroid_is_column_mean():
    rng = np.random.default_rng(11)
    frames = rng.standard_normal((83, 5)).astype(np.float32)
    cb = kmeans_fit(frames, KMeansConfig(k=1, seed=0))
    f64 = frames.astype(np.float64)
    assert np.allclose(cb.centroids, f64.mean(axis=0), rtol=1e-12, atol=0)
    expected_inertia = ((f64 - f64.mean(axis=0)) ** 2).sum()
    assert cb.inertia == pytest.approx(expected_inertia, rel=1e-9)
    assert np.all(assign_symbols(cb, frames) == 0)


def test_k_equals_n_distinct_points_zero_inertia():
    rng = np.random.default_rng(3)
    frames = rng.standard_normal((12, 4)).astype(np.float32)
    cb = kmeans_fit(frames, KMeansConfig(k=12, seed=5))
    assert cb.inertia == 0.0
    assert set(assign_symbols(cb, frames).tolist()) == set(range(12))


def test_two_cluster_partition_matches_exhaustive_search():
    rng = np.random.default_rng(21)
    for trial in range(5):
        centers = np.array([[2.0, 0.0], [-2.0, 0.0]])
        points = np.vstack(
            [centers[0] + 0.3 * rng.standard_normal((3, 2)),
             centers[1] + 0.3 * rng.standard_normal((3, 2))]
        ).astype(np.float32)
        best_cost, best_parts = brute_force_two_partition(points)
        cb = kmeans_fit(points, KMeansConfig(k=2, seed=trial))
        labels = assign_symbols(cb, points)
        got_parts = frozenset(
            [frozenset(np.flatnonzero(labels == 0).tolist()),
             frozenset(np.flatnonzero(labels == 1).tolist())]
        )
        assert got_parts == best_parts
        assert cb.inertia == pytest.approx(best_cost, rel=1e-5)


def test_fit_is_local_optimum():
    # each centroid is the mean of its members; each point sits with its
    # nearest centroid (by construction of the last assignment pass)
    rng = np.random.default_rng(4)
    frames = rng.standard_normal((200, 3)).astype(np.float32)
    cb = kmeans_fit(frames, KMeansConfig(k=6, seed=9))
    labels = assign_symbols(cb, frames)
    for c in range(6):
        members = frames[labels == c].astype(np.float64)
        assert len(members) >= 1
        assert np.allclose(cb.centroids[c], members.mean(axis=0), rtol=1e-4, atol=1e-5)


def test_trace_nonincreasing_and_diagnostics():
    rng = np.random.default_rng(12)
    frames = rng.standard_normal((300, 4)).astype(np.float32)
    cb = kmeans_fit(frames, KMeansConfig(k=8, seed=1))
    trace = cb.inertia_trace
    assert len(trace) >= 2
    for prev, cur in zip(trace, trace[1:]):
        assert cur <= prev * (1 + 1e-12)
    assert cb.iterations_run == len(trace) - 1
    assert cb.inertia == trace[-1]
    assert cb.centroids.shape == (8, 4)
    assert inertia(cb, frames) == pytest.approx(cb.inertia, rel=1e-12)


def test_fit_deterministic_for_fixed_seed():
    rng = np.random.default_rng(8)
    frames = rng.standard_normal((150, 6)).astype(np.float32)
    config = KMeansConfig(k=10, seed=42)
    cb1 = kmeans_fit(frames, config)
    cb2 = kmeans_fit(frames, config)
    assert cb1.centroids.tobytes() == cb2.centroids.tobytes()
    assert cb1.inertia_trace == cb2.inertia_trace
    assert np.array_equal(assign_symbols(cb1, frames), assign_symbols(cb2, frames))


def test_every_cluster_keeps_members():
    rng = np.random.default_rng(15)
    frames = rng.standard_normal((60, 3)).astype(np.float32)
    cb = kmeans_fit(frames, KMeansConfig(k=45, seed=2))
    assert len(set(assign_symbols(cb, frames).tolist())) == 45


def test_heavy_duplicates_terminate():
    base = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
    frames = np.vstack([base, base])  # 6 points, 3 distinct
    cb = kmeans_fit(frames, KMeansConfig(k=4, seed=0))
    assert cb.inertia == 0.0


def test_max_fit_frames_cap():
    rng = np.random.default_rng(30)
    frames = rng.standard_normal((500, 3)).astype(np.float32)
    config = KMeansConfig(k=5, seed=7, max_fit_frames=100)
    cb1 = kmeans_fit(frames, config)
    cb2 = kmeans_fit(frames, config)
    assert cb1.centroids.tobytes() == cb2.centroids.tobytes()


def test_fit_input_validation():
    rng = np.random.default_rng(0)
    frames = rng.standard_normal((5, 2)).astype(np.float32)
    with pytest.raises(QuantizeError, match="at least"):
        kmeans_fit(frames, KMeansConfig(k=6))
    bad = frames.copy()
    bad[2, 1] = np.nan
    with pytest.raises(QuantizeError, match="non-finite"):
        kmeans_fit(bad, KMeansConfig(k=2))


def test_config_validation():
    with pytest.raises(QuantizeError):
        KMeansConfig(k=0)
    with pytest.raises(QuantizeError):
        KMeansConfig(max_iterations=0)
    with pytest.raises(QuantizeError):
        KMeansConfig(rel_tolerance=-1e-3)
    with pytest.raises(QuantizeError):
        KMeansConfig(init="random")
    with pytest.raises(QuantizeError):
        KMeansConfig(seed=-1)
    with pytest.raises(QuantizeError):
        KMeansConfig(k=10, max_fit_frames=5)
    with pytest.raises(QuantizeError):
        KMeansConfig(restarts=0)
    assert KMeansConfig().k == 200
    assert KMeansConfig().max_iterations == 100
    assert KMeansConfig().rel_tolerance == 1e-4
    assert KMeansConfig().restarts == 1


def test_restarts_one_matches_default_fit():
    rng = np.random.default_rng(5)
    frames = rng.normal(size=(60, 3))
    base = kmeans_fit(frames, KMeansConfig(k=4, seed=11))
    same = kmeans_fit(frames, KMeansConfig(k=4, seed=11, restarts=1))
    assert np.array_equal(base.centroids, same.centroids)
    assert base.inertia_trace == same.inertia_trace


def test_restarts_never_hurt_and_keep_determinism():
    rng = np.random.default_rng(6)
    for trial in range(20):
        frames = rng.normal(size=(int(rng.integers(8, 30)), 2))
        single = kmeans_fit(frames, KMeansConfig(k=3, seed=trial))
        multi = kmeans_fit(frames, KMeansConfig(k=3, seed=trial, restarts=8))
        again = kmeans_fit(frames, KMeansConfig(k=3, seed=trial, restarts=8))
        assert multi.inertia <= single.inertia + 1e-12
        assert np.array_equal(multi.centroids, again.centroids)


def test_restarts_escape_a_local_optimum():
    # tiny instance where single inits land in several distinct optima
    frames = np.random.default_rng(0).normal(size=(7, 2))
    singles = [
        kmeans_fit(frames, KMeansConfig(k=3, seed=seed)).inertia
        for seed in range(12)
    ]
    best = min(singles)
    assert max(singles) > best + 1e-6, "every seed found the same optimum"
    for seed in range(12):
        multi = kmeans_fit(frames, KMeansConfig(k=3, seed=seed, restarts=12))
        assert multi.inertia <= best + 1e-12


# ---------------------------------------------------------------------------
# Assignment and inertia


def test_assignment_matches_per_frame_loop():
    rng = np.random.default_rng(99)
    centroids = rng.standard_normal((7, 5)).astype(np.float32)
    cb = Codebook(centroids=centroids, seed=0)
    frames = rng.standard_normal((100, 5)).astype(np.float32)
    assert np.array_equal(assign_symbols(cb, frames), loop_assign(centroids, frames))


def test_frame_on_centroid_and_tie_rule():
    centroids = np.full((6, 2), 10.0, dtype=np.float32)
    centroids[2] = [0.0, 0.0]
    centroids[5] = [2.0, 0.0]
    centroids[3] = [-7.0, 3.0]
    cb = Codebook(centroids=centroids, seed=0)
    # exact hit on centroid 3
    assert assign_symbols(cb, np.array([[-7.0, 3.0]], dtype=np.float32))[0] == 3
    # (1, 0) is exactly equidistant from centroids 2 and 5: lowest wins
    assert assign_symbols(cb, np.array([[1.0, 0.0]], dtype=np.float32))[0] == 2


def test_inertia_values():
    centroids = np.array([[0.0, 0.0], [5.0, 5.0]], dtype=np.float32)
    cb = Codebook(centroids=centroids, seed=0)
    frames = np.array([[0.0, 0.0], [5.0, 5.0]], dtype=np.float32)
    assert inertia(cb, frames) == 0.0
    # one frame at Euclidean distance 2 from its nearest centroid
    assert inertia(cb, np.array([[2.0, 0.0]], dtype=np.float32)) == 4.0


def test_inertia_matches_naive_sum():
    rng = np.random.default_rng(5)
    centroids = rng.standard_normal((4, 3)).astype(np.float32)
    cb = Codebook(centroids=centroids, seed=0)
    frames = rng.standard_normal((57, 3)).astype(np.float32)
    total = 0.0
    for frame in frames.astype(np.float64):
        total += ((centroids.astype(np.float64) - frame) ** 2).sum(axis=1).min()
    assert inertia(cb, frames) == pytest.approx(total, rel=1e-12)


def test_dimension_mismatch_rejected():
    cb = Codebook(centroids=np.zeros((3, 4), dtype=np.float32), seed=0)
    with pytest.raises(QuantizeError, match="dimension mismatch"):
        assign_symbols(cb, np.zeros((5, 3), dtype=np.float32))
    with pytest.raises(QuantizeError, match="dimension mismatch"):
        inertia(cb, np.zeros((5, 5), dtype=np.float32))


# ---------------------------------------------------------------------------
# Codebook files


def test_codebook_roundtrip(tmp_path):
    rng = np.random.default_rng(77)
    frames = rng.standard_normal((200, 4)).astype(np.float32)
    cb = kmeans_fit(frames, KMeansConfig(k=9, seed=123))
    path = tmp_path / "codebook.sslk"
    save_codebook(cb, path)
    back = load_codebook(path)
    # the file rounds centroids to float32; nothing else is lost
    assert np.array_equal(back.centroids, cb.centroids.astype(np.float32))
    assert back.seed == 123
    assert back.k == 9 and back.dim == 4
    assert back.inertia is None and back.iterations_run is None
    assert np.array_equal(assign_symbols(back, frames), assign_symbols(cb, frames))
    # a second save/load cycle is lossless
    save_codebook(back, path)
    again = load_codebook(path)
    assert again.centroids.tobytes() == back.centroids.tobytes()


def test_codebook_bad_magic(tmp_path):
    path = tmp_path / "bad.sslk"
    path.write_bytes(CB_HEADER.pack(b"XXXX", 1, 1, 1, 0) + b"\x00" * 4)
    with pytest.raises(CodebookFormatError, match="bad magic") as excinfo:
        load_codebook(path)
    assert excinfo.value.offset == 0


def test_codebook_bad_version(tmp_path):
    path = tmp_path / "bad.sslk"
    path.write_bytes(CB_HEADER.pack(b"SSLK", 9, 1, 1, 0) + b"\x00" * 4)
    with pytest.raises(CodebookFormatError, match="version"):
        load_codebook(path)


def test_codebook_truncated(tmp_path):
    path = tmp_path / "bad.sslk"
    path.write_bytes(CB_HEADER.pack(b"SSLK", 1, 2, 2, 0) + b"\x00" * 12)
    with pytest.raises(CodebookFormatError, match="truncated payload"):
        load_codebook(path)


def test_codebook_trailing_data(tmp_path):
    path = tmp_path / "bad.sslk"
    path.write_bytes(CB_HEADER.pack(b"SSLK", 1, 1, 1, 0) + b"\x00" * 8)
    with pytest.raises(CodebookFormatError, match="trailing"):
        load_codebook(path)


def test_codebook_nonfinite(tmp_path):
    payload = np.array([[0.0, np.inf]], dtype="<f4")
    path = tmp_path / "bad.sslk"
    path.write_bytes(CB_HEADER.pack(b"SSLK", 1, 1, 2, 0) + payload.tobytes())
    with pytest.raises(CodebookFormatError, match=r"non-finite centroid at \(0, 1\)") as excinfo:
        load_codebook(path)
    assert excinfo.value.offset == CB_HEADER.size + 4
