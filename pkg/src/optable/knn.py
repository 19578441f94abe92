"""Exact and approximate k-nearest-neighbour search with k-NN regression.

Neighbours are ordered by Euclidean distance with ties broken by the lower
insertion index. The exact mode returns exactly what :func:`brute_force_knn`
returns. The approximate mode is a forest of randomized k-d trees searched
best-bin-first under a budget of distance checks.
"""

from __future__ import annotations

import heapq
import struct
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import EmptyIndexError, OptableError

EXACT = "exact"
APPROXIMATE = "approximate"

_MAGIC = b"OPTK"
_VERSION = 1
_HEADER = struct.Struct("<4sIQIBIIIq")
_QUERY_BLOCK = 1 << 22


@dataclass(frozen=True)
class LabeledPoint:
    descriptor: np.ndarray
    label: float
    image_id: int = -1
    rect: tuple[int, int, int] = (-1, -1, 0)  # (x, y, size)


@dataclass(frozen=True)
class PointSet:
    """Column-oriented collection of labeled points, in insertion order."""

    descriptors: np.ndarray  # (n, d) float64
    labels: np.ndarray  # (n,) float64
    image_ids: np.ndarray  # (n,) int64
    rects: np.ndarray  # (n, 3) int64: x, y, size

    def __post_init__(self):
        n = len(self.labels)
        if self.descriptors.shape[0] != n or len(self.image_ids) != n or self.rects.shape[0] != n:
            raise ValueError("point set columns have inconsistent lengths")
        if n and (self.labels.min() < 0.0 or self.labels.max() > 1.0):
            raise ValueError("labels must lie in [0, 1]")

    def __len__(self) -> int:
        return len(self.labels)

    def __getitem__(self, i: int) -> LabeledPoint:
        return LabeledPoint(self.descriptors[i].copy(), float(self.labels[i]),
                            int(self.image_ids[i]), tuple(int(v) for v in self.rects[i]))

    @classmethod
    def from_arrays(cls, descriptors, labels, image_ids=None, rects=None) -> "PointSet":
        descriptors = np.atleast_2d(np.asarray(descriptors, dtype=np.float64))
        labels = np.asarray(labels, dtype=np.float64).ravel()
        n = len(labels)
        if image_ids is None:
            image_ids = np.full(n, -1, dtype=np.int64)
        if rects is None:
            rects = np.tile(np.array([-1, -1, 0], dtype=np.int64), (n, 1))
        return cls(descriptors, labels, np.asarray(image_ids, dtype=np.int64),
                   np.asarray(rects, dtype=np.int64).reshape(n, 3))

    @classmethod
    def from_points(cls, points: Sequence[LabeledPoint]) -> "PointSet":
        if not points:
            return cls.from_arrays(np.zeros((0, 0)), [])
        return cls.from_arrays(
            np.stack([np.asarray(p.descriptor, dtype=np.float64) for p in points]),
            [p.label for p in points],
            [p.image_id for p in points],
            [p.rect for p in points],
        )

    @classmethod
    def concat(cls, parts: Sequence["PointSet"]) -> "PointSet":
        parts = [p for p in parts if len(p)]
        if not parts:
            return cls.from_arrays(np.zeros((0, 0)), [])
        return cls(
            np.concatenate([p.descriptors for p in parts]),
            np.concatenate([p.labels for p in parts]),
            np.concatenate([p.image_ids for p in parts]),
            np.concatenate([p.rects for p in parts]),
        )


@dataclass(frozen=True)
class IndexParams:
    mode: str = EXACT
    trees: int = 8
    leaf_size: int = 32
    checks: int = 8192

    def __post_init__(self):
        if self.mode not in (EXACT, APPROXIMATE):
            raise ValueError(f"unknown index mode {self.mode!r}")
        if self.trees < 1 or self.leaf_size < 1 or self.checks < 1:
            raise ValueError("trees, leaf_size and checks must all be >= 1")


class RegressResult(NamedTuple):
    value: float
    k_used: int
    k_requested: int

    @property
    def degraded(self) -> bool:
        return self.k_used < self.k_requested


def squared_distances(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Squared Euclidean distance from each row of ``points`` to ``q``.

    Every search path funnels through this one function so that equal inputs
    produce bit-equal distances.
    """
    diff = points - q
    return np.sum(diff * diff, axis=1)


def brute_force_knn(points, q, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Exhaustive k-NN: (indices, distances), ties to the lower index."""
    data = points.descriptors if isinstance(points, PointSet) else np.asarray(points, dtype=np.float64)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(data) < k:
        raise EmptyIndexError(f"need at least {k} points, have {len(data)}")
    d2 = squared_distances(data, np.asarray(q, dtype=np.float64))
    order = np.argsort(d2, kind="stable")[:k]
    return order, np.sqrt(d2[order])


class _Tree:
    """One randomized k-d tree stored as flat node arrays."""

    __slots__ = ("dim", "value", "left", "right", "start", "end", "perm")

    def __init__(self, data: np.ndarray, leaf_size: int, rng: np.random.Generator,
                 sample: int = 100, top_dims: int = 5):
        n = len(data)
        perm = np.arange(n)
        dim, value, left, right, start, end = [], [], [], [], [], []

        def new_node(lo, hi):
            dim.append(-1)
            value.append(0.0)
            left.append(-1)
            right.append(-1)
            start.append(lo)
            end.append(hi)
            return len(dim) - 1

        stack = [new_node(0, n)]
        while stack:
            node = stack.pop()
            lo, hi = start[node], end[node]
            if hi - lo <= leaf_size:
                continue
            idx = perm[lo:hi]
            picked = idx if hi - lo <= sample else idx[rng.choice(hi - lo, sample, replace=False)]
            var = data[picked].var(axis=0)
            candidates = np.argsort(-var, kind="stable")[:top_dims]
            d = int(candidates[rng.integers(len(candidates))])
            split = float(data[picked, d].mean())
            go_left = data[idx, d] < split
            n_left = int(go_left.sum())
            if n_left == 0 or n_left == hi - lo:
                col = data[idx, d]
                order = np.argsort(col, kind="stable")
                n_left = (hi - lo) // 2
                split = float(col[order[n_left]])
                if col[order[n_left - 1]] == split:
                    continue  # all-equal column around the median; keep as leaf
                go_left = np.zeros(hi - lo, dtype=bool)
                go_left[order[:n_left]] = True
            perm[lo:hi] = np.concatenate([idx[go_left], idx[~go_left]])
            dim[node] = d
            value[node] = split
            left[node] = new_node(lo, lo + n_left)
            right[node] = new_node(lo + n_left, hi)
            stack.extend([right[node], left[node]])

        self.dim = dim
        self.value = value
        self.left = left
        self.right = right
        self.start = start
        self.end = end
        self.perm = perm


class KnnIndex:
    """Immutable searchable bank of labeled descriptors."""

    def __init__(self, points: PointSet, params: IndexParams = IndexParams(), seed: int = 0):
        if len(points) == 0:
            raise EmptyIndexError("cannot index an empty point set")
        data = np.ascontiguousarray(points.descriptors, dtype=np.float64)
        data.setflags(write=False)
        self.points = points
        self.data = data
        self.labels = points.labels
        self.params = params
        self.seed = seed
        self._sqnorms = np.sum(data * data, axis=1)
        self._trees: list[_Tree] = []
        if params.mode == APPROXIMATE:
            rng = np.random.default_rng(seed)
            self._trees = [_Tree(data, params.leaf_size, rng) for _ in range(params.trees)]

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def mode(self) -> str:
        return self.params.mode

    def query(self, queries, k: int, checks: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Neighbour indices and distances, each of shape (m, k_used)."""
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        if k < 1:
            raise ValueError("k must be >= 1")
        k = min(k, len(self))
        if len(q) == 0:
            return np.zeros((0, k), dtype=np.int64), np.zeros((0, k))
        if self.params.mode == EXACT:
            return self._query_exact(q, k)
        budget = self.params.checks if checks is None else checks
        rows = [self._query_forest(row, k, budget) for row in q]
        return np.stack([r[0] for r in rows]), np.stack([r[1] for r in rows])

    def _query_exact(self, q: np.ndarray, k: int):
        n = len(self)
        out_idx = np.empty((len(q), k), dtype=np.int64)
        out_dist = np.empty((len(q), k))
        block = max(1, _QUERY_BLOCK // n)
        qnorms = np.sum(q * q, axis=1)
        scale = 1.0 + self._sqnorms.max()
        for b0 in range(0, len(q), block):
            qb = q[b0:b0 + block]
            approx = qnorms[b0:b0 + block, None] + self._sqnorms[None, :] - 2.0 * (qb @ self.data.T)
            kth = np.partition(approx, k - 1, axis=1)[:, k - 1]
            # expansion error is ~1e-14 * scale; the margin keeps every true neighbour
            margin = 1e-9 * (scale + qnorms[b0:b0 + block])
            for j, row in enumerate(approx):
                cand = np.flatnonzero(row <= kth[j] + margin[j])
                d2 = squared_distances(self.data[cand], qb[j])
                order = np.argsort(d2, kind="stable")[:k]
                out_idx[b0 + j] = cand[order]
                out_dist[b0 + j] = np.sqrt(d2[order])
        return out_idx, out_dist

    def _query_forest(self, q: np.ndarray, k: int, budget: int):
        seen = np.zeros(len(self), dtype=bool)
        best_idx = np.zeros(0, dtype=np.int64)
        best_d2 = np.zeros(0)
        heap = [(0.0, t, 0) for t in range(len(self._trees))]
        checks = 0
        while heap:
            bound, t, node = heapq.heappop(heap)
            if len(best_idx) == k and bound > best_d2[-1]:
                break
            tree = self._trees[t]
            while tree.dim[node] >= 0:
                diff = q[tree.dim[node]] - tree.value[node]
                if diff < 0:
                    near, far = tree.left[node], tree.right[node]
                else:
                    near, far = tree.right[node], tree.left[node]
                heapq.heappush(heap, (max(bound, diff * diff), t, far))
                node = near
            members = tree.perm[tree.start[node]:tree.end[node]]
            checks += len(members)
            fresh = members[~seen[members]]
            if len(fresh):
                seen[fresh] = True
                d2 = squared_distances(self.data[fresh], q)
                all_idx = np.concatenate([best_idx, fresh])
                all_d2 = np.concatenate([best_d2, d2])
                order = np.lexsort((all_idx, all_d2))[:k]
                best_idx, best_d2 = all_idx[order], all_d2[order]
            if checks >= budget and len(best_idx) == k:
                break
        return best_idx, np.sqrt(best_d2)

    def regress(self, queries, k: int) -> tuple[np.ndarray, int]:
        """Mean neighbour label per query, and the k actually used."""
        idx, _ = self.query(queries, k)
        k_used = idx.shape[1]
        labels = self.labels[idx]
        values = np.clip(labels.mean(axis=1), labels.min(axis=1), labels.max(axis=1))
        return values, k_used


def build_index(points, params: IndexParams = IndexParams(), seed: int = 0) -> KnnIndex:
    if not isinstance(points, PointSet):
        points = PointSet.from_points(list(points))
    return KnnIndex(points, params, seed)


def query_regress(index: KnnIndex, q, k: int) -> RegressResult:
    values, k_used = index.regress(np.asarray(q, dtype=np.float64)[None, :], k)
    return RegressResult(float(values[0]), k_used, k)


def save_index(path, index: KnnIndex) -> None:
    """Write the index points and build parameters to a versioned binary file.

    Layout (little endian): magic ``OPTK``, u32 version, u64 count, u32 dim,
    u8 mode (0 exact, 1 approximate), u32 trees, u32 leaf_size, u32 checks,
    i64 seed, then count*dim f64 descriptors, count f64 labels, count i64
    image ids and count*3 i64 rects. Trees are rebuilt from the seed on load.
    """
    pts = index.points
    n, d = pts.descriptors.shape
    p = index.params
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, n, d, int(p.mode == APPROXIMATE),
                              p.trees, p.leaf_size, p.checks, index.seed))
        for arr, dtype in ((pts.descriptors, "<f8"), (pts.labels, "<f8"),
                           (pts.image_ids, "<i8"), (pts.rects, "<i8")):
            fh.write(np.ascontiguousarray(arr, dtype=dtype).tobytes())


def load_index(path) -> KnnIndex:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise OptableError(f"{path}: truncated index header")
    magic, version, n, d, mode, trees, leaf, checks, seed = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise OptableError(f"{path}: not an index file")
    if version != _VERSION:
        raise OptableError(f"{path}: unsupported index version {version}")
    sizes = [n * d * 8, n * 8, n * 8, n * 24]
    if len(raw) != _HEADER.size + sum(sizes):
        raise OptableError(f"{path}: index payload has the wrong length")
    off = _HEADER.size
    arrays = []
    for size, dtype in zip(sizes, ("<f8", "<f8", "<i8", "<i8")):
        arrays.append(np.frombuffer(raw, dtype=dtype, count=size // 8, offset=off).copy())
        off += size
    points = PointSet(arrays[0].reshape(n, d), arrays[1], arrays[2], arrays[3].reshape(n, 3))
    params = IndexParams(APPROXIMATE if mode else EXACT, trees, leaf, checks)
    return KnnIndex(points, params, seed)
