"""Pairwise edit-distance probe over discrete symbol sequences.

For every pair of classes, the mean Levenshtein distance between their
instances' symbol sequences fills one cell of a class-by-class matrix.
If within-class distances run lower than between-class distances the
representation separates the classes; diagonal_contrast turns that into
a scalar.  Cells average over every pair, or over a seeded uniform
sample once a cell exceeds the configured cap.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from toneprobe.corpus import TaskKind


class EditDistError(ValueError):
    """Invalid distance-probe input."""


@dataclass(frozen=True)
class PairSamplingConfig:
    """Caps the per-cell pair count; the seed fixes which pairs are drawn.

    include_self_pairs admits (x, x) pairs on the diagonal; default off,
    since identical instances contribute distance 0 by construction.
    """

    max_pairs_per_cell: int = 2000
    seed: int = 0
    include_self_pairs: bool = False

    def __post_init__(self):
        if self.max_pairs_per_cell < 1:
            raise EditDistError("max_pairs_per_cell must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise EditDistError("seed must fit in u64")


@dataclass(frozen=True)
class DistanceMatrix:
    """Mean pairwise distances between class pairs.

    values[i, j] is NaN for a flagged cell (a class with < 2 instances
    has no within-class pairs); counts[i, j] is the number of pairs the
    cell averaged over, 0 when flagged.
    """

    classes: tuple[str, ...]
    values: np.ndarray
    counts: np.ndarray
    normalized: bool
    task_name: Optional[str] = None
    sampling: Optional[PairSamplingConfig] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        counts = np.asarray(self.counts, dtype=np.int64)
        c = len(self.classes)
        if values.shape != (c, c) or counts.shape != (c, c):
            raise EditDistError(f"matrix shapes must be ({c}, {c})")
        finite = np.isfinite(values)
        if not np.array_equal(finite, finite.T) or not np.array_equal(
            np.where(finite, values, 0.0), np.where(finite, values, 0.0).T
        ):
            raise EditDistError("distance matrix must be symmetric")
        if not np.array_equal(counts, counts.T) or (counts < 0).any():
            raise EditDistError("counts must be symmetric and non-negative")
        if (values[finite] < 0).any():
            raise EditDistError("distances must be non-negative")
        if self.normalized and (values[finite] > 1 + 1e-12).any():
            raise EditDistError("normalized distances must be <= 1")
        values.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "counts", counts)

    def flagged_cells(self) -> list[tuple[str, str]]:
        out = []
        for i, j in np.argwhere(~np.isfinite(self.values)):
            if i <= j:
                out.append((self.classes[i], self.classes[j]))
        return out


def levenshtein(a, b) -> int:
    """Minimum insertions, deletions, substitutions turning a into b.

    Classic two-row dynamic program, unit costs, any hashable symbols.
    """
    if isinstance(a, np.ndarray):
        a = a.tolist()
    if isinstance(b, np.ndarray):
        b = b.tolist()
    if len(a) < len(b):
        a, b = b, a
    nb = len(b)
    if nb == 0:
        return len(a)
    prev = list(range(nb + 1))
    cur = [0] * (nb + 1)
    for i, sym_a in enumerate(a, 1):
        cur[0] = i
        for j in range(1, nb + 1):
            best = prev[j - 1] + (sym_a != b[j - 1])
            up = prev[j] + 1
            if up < best:
                best = up
            left = cur[j - 1] + 1
            if left < best:
                best = left
            cur[j] = best
        prev, cur = cur, prev
    return prev[nb]


def _pair_distance(a, b, normalize: bool) -> float:
    d = levenshtein(a, b)
    if not normalize:
        return float(d)
    denom = max(len(a), len(b))
    return d / denom if denom else 0.0


def _diag_pair_count(n: int, with_self: bool) -> int:
    return n * (n + 1) // 2 if with_self else n * (n - 1) // 2


def _decode_diag_pair(m: int, row_starts: np.ndarray, n: int, with_self: bool) -> tuple[int, int]:
    # row_starts[p] = index of the first pair whose smaller element is p
    p = int(np.searchsorted(row_starts, m, side="right")) - 1
    offset = m - int(row_starts[p])
    q = p + offset if with_self else p + 1 + offset
    return p, q


def _cell_mean(
    seqs_i: list, seqs_j: Optional[list], rng: np.random.Generator,
    cap: int, with_self: bool, normalize: bool,
) -> tuple[float, int]:
    """Mean pair distance for one cell; seqs_j None means a diagonal cell."""
    if seqs_j is None:
        n = len(seqs_i)
        total = _diag_pair_count(n, with_self)
        if total == 0:
            return float("nan"), 0
        if total <= cap:
            picks = range(total)
        else:
            picks = sorted(int(m) for m in rng.choice(total, size=cap, replace=False))
        sizes = np.array([(n - p) if with_self else (n - 1 - p) for p in range(n)], dtype=np.int64)
        row_starts = np.concatenate([[0], np.cumsum(sizes)])
        acc = 0.0
        count = 0
        for m in picks:
            p, q = _decode_diag_pair(m, row_starts, n, with_self)
            acc += _pair_distance(seqs_i[p], seqs_i[q], normalize)
            count += 1
        return acc / count, count
    total = len(seqs_i) * len(seqs_j)
    if total <= cap:
        picks = range(total)
    else:
        picks = sorted(int(m) for m in rng.choice(total, size=cap, replace=False))
    nj = len(seqs_j)
    acc = 0.0
    count = 0
    for m in picks:
        acc += _pair_distance(seqs_i[m // nj], seqs_j[m % nj], normalize)
        count += 1
    return acc / count, count


def pairwise_class_distance(
    dataset: Sequence[tuple[str, Sequence]],
    sampling: PairSamplingConfig,
    normalize: bool = True,
    task: Optional[TaskKind] = None,
    class_order: Optional[Sequence[str]] = None,
    threads: int = 1,
) -> DistanceMatrix:
    """Mean Levenshtein distance for every unordered class pair.

    Classes are ordered by class_order when given (it must cover every
    label present), otherwise sorted; cell (i, j) averages cross pairs,
    the diagonal averages distinct-instance pairs within the class.  Each
    cell draws from its own generator seeded by (seed, i, j), so results
    do not depend on evaluation order or thread count.
    """
    if len(dataset) < 2:
        raise EditDistError("need at least 2 instances")
    by_class: dict[str, list] = {}
    for label, seq in dataset:
        by_class.setdefault(label, []).append(tuple(int(s) for s in np.asarray(seq).ravel()))
    if class_order is not None:
        classes = tuple(class_order)
        missing = set(by_class) - set(classes)
        if missing:
            raise EditDistError(f"class_order is missing labels: {sorted(missing)}")
        classes = tuple(c for c in classes if c in by_class)
    else:
        classes = tuple(sorted(by_class))
    c = len(classes)
    values = np.full((c, c), np.nan)
    counts = np.zeros((c, c), dtype=np.int64)

    cells = [(i, j) for i in range(c) for j in range(i, c)]

    def run_cell(cell):
        i, j = cell
        rng = np.random.default_rng([sampling.seed, i, j])
        seqs_i = by_class[classes[i]]
        seqs_j = None if i == j else by_class[classes[j]]
        return _cell_mean(
            seqs_i, seqs_j, rng, sampling.max_pairs_per_cell,
            sampling.include_self_pairs, normalize,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run_cell, cells))
    else:
        results = [run_cell(cell) for cell in cells]
    for (i, j), (mean, count) in zip(cells, results):
        values[i, j] = values[j, i] = mean
        counts[i, j] = counts[j, i] = count

    return DistanceMatrix(
        classes=classes,
        values=values,
        counts=counts,
        normalized=normalize,
        task_name=task.value if task is not None else None,
        sampling=sampling,
    )


def diagonal_contrast(matrix: DistanceMatrix) -> float:
    """(mean off-diagonal - mean diagonal) / mean off-diagonal.

    Positive when within-class distances run lower than between-class
    ones, i.e. the representation separates the classes.
    """
    c = len(matrix.classes)
    if c < 2:
        raise EditDistError("need at least 2 classes")
    if matrix.flagged_cells():
        raise EditDistError(f"matrix has flagged cells: {matrix.flagged_cells()}")
    diag = float(np.diagonal(matrix.values).mean())
    off_mask = ~np.eye(c, dtype=bool)
    off = float(matrix.values[off_mask].mean())
    if off == 0.0:
        raise EditDistError("off-diagonal mean is zero; contrast undefined")
    return (off - diag) / off


def export_distance_matrix(matrix: DistanceMatrix, path) -> None:
    """Write the matrix as CSV plus counts and a metadata sidecar.

    <path>: values CSV with class labels as header row and column;
    <path stem>.counts.csv: pair counts in the same layout;
    <path stem>.meta.json: task, normalization, classes, sampling.
    """
    path = Path(path)

    def write_grid(target, grid, fmt):
        lines = ["," + ",".join(matrix.classes) + "\n"]
        for i, cls in enumerate(matrix.classes):
            cells = ",".join(fmt(x) for x in grid[i])
            lines.append(f"{cls},{cells}\n")
        target.write_text("".join(lines), encoding="utf-8")

    write_grid(path, matrix.values, lambda x: "nan" if not np.isfinite(x) else f"{x:.10g}")
    write_grid(path.with_suffix(".counts.csv"), matrix.counts, lambda x: str(int(x)))
    meta = {
        "task": matrix.task_name,
        "normalized": matrix.normalized,
        "classes": list(matrix.classes),
        "sampling": None
        if matrix.sampling is None
        else {
            "max_pairs_per_cell": matrix.sampling.max_pairs_per_cell,
            "seed": matrix.sampling.seed,
            "include_self_pairs": matrix.sampling.include_self_pairs,
        },
    }
    path.with_suffix(".meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
