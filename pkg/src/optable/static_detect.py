"""Static instrument segmentation: per-scale reference banks and coarse-to-fine k-NN regression."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DatasetError, DimensionMismatchError, ImageSizeError
from .features import IntegralStats, PatchRect, patch_descriptors, tile_origins
from .knn import IndexParams, KnnIndex, PointSet

# featurize(size, xs, ys) -> (n, d) query descriptors for the given tiles
Featurizer = Callable[[int, np.ndarray, np.ndarray], np.ndarray]


def scale_sizes(p_min: int, tau: int, levels: int) -> list[int]:
    """Geometric ladder of patch sides, finest first: [p_min, p_min*tau, ...]."""
    if p_min < 1 or tau < 2 or levels < 1:
        raise ValueError(f"invalid ladder p_min={p_min} tau={tau} levels={levels}")
    sizes = [p_min * tau**i for i in range(levels)]
    if sizes[-1] > 2**31:
        raise ValueError(f"ladder overflows: coarsest size {sizes[-1]}")
    return sizes


@dataclass(frozen=True)
class ScaleLadder:
    p_min: int = 5
    tau: int = 4
    levels: int = 3

    def __post_init__(self):
        scale_sizes(self.p_min, self.tau, self.levels)

    @property
    def sizes(self) -> list[int]:
        return scale_sizes(self.p_min, self.tau, self.levels)

    @property
    def coarsest(self) -> int:
        return self.sizes[-1]


@dataclass(frozen=True)
class DetectParams:
    """Tunable parameters shared by both tasks.

    ``subdivide_threshold`` is compared with a strict ``>``; the default 0
    subdivides any patch with nonzero predicted probability. Any negative
    value forces full subdivision.
    """

    k: int = 89
    ladder: ScaleLadder = field(default_factory=ScaleLadder)
    subdivide_threshold: float = 0.0
    index: IndexParams = field(default_factory=IndexParams)
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.subdivide_threshold < 1.0:
            raise ValueError("subdivide_threshold must be < 1")


@dataclass(frozen=True)
class Sample:
    image: np.ndarray
    mask: np.ndarray
    name: str = ""


@dataclass(frozen=True)
class ReferenceBank:
    """One k-NN index per ladder size (finest first), built without ``excluded``."""

    sizes: tuple[int, ...]
    indices: dict
    excluded: int | None = None
    w_size: int | None = None

    def index_for(self, size: int) -> KnnIndex:
        return self.indices[size]


@dataclass
class SegmentResult:
    prob: np.ndarray
    queries: dict  # patch size -> number of k-NN queries issued
    k_used: int


def patch_label(mask: np.ndarray, rect: PatchRect) -> float:
    """Fraction of foreground pixels in the patch."""
    mask = np.asarray(mask, dtype=bool)
    rect.check(mask.shape[1], mask.shape[0])
    block = mask[rect.y:rect.y + rect.size, rect.x:rect.x + rect.size]
    return int(block.sum()) / (rect.size * rect.size)


def tile_labels(mask: np.ndarray, xs, ys, size: int) -> np.ndarray:
    """Vectorized :func:`patch_label` for many same-sized tiles."""
    mask = np.asarray(mask, dtype=bool)
    table = np.zeros((mask.shape[0] + 1, mask.shape[1] + 1), dtype=np.int64)
    table[1:, 1:] = mask.cumsum(axis=0).cumsum(axis=1)
    xs = np.asarray(xs, dtype=np.int64)
    ys = np.asarray(ys, dtype=np.int64)
    counts = (table[ys + size, xs + size] - table[ys, xs + size]
              - table[ys + size, xs] + table[ys, xs])
    return counts / float(size * size)


def index_seed(seed: int, size: int) -> int:
    return int(np.random.SeedSequence([seed, size]).generate_state(1)[0])


def tile_points(image_id: int, width: int, height: int, size: int,
                featurize: Featurizer, mask: np.ndarray) -> PointSet:
    """Labeled points for the non-overlapping tiling of one image at one size."""
    xs, ys = tile_origins(width, height, size)
    desc = featurize(size, xs, ys)
    labels = tile_labels(mask, xs, ys, size)
    rects = np.stack([xs, ys, np.full_like(xs, size)], axis=1)
    return PointSet.from_arrays(desc, labels, np.full(len(xs), image_id), rects)


def assemble_bank(per_image: Sequence[dict], sizes: Sequence[int], params: DetectParams,
                  exclude: int | None = None, w_size: int | None = None) -> ReferenceBank:
    """Build per-size indices from cached per-image point sets, in dataset order."""
    indices = {}
    for size in sizes:
        parts = [pts[size] for i, pts in enumerate(per_image) if i != exclude]
        points = PointSet.concat(parts)
        if len(points) == 0:
            raise DatasetError(f"no reference patches at size {size}")
        indices[size] = KnnIndex(points, params.index, index_seed(params.seed, size))
    return ReferenceBank(tuple(sizes), indices, exclude, w_size)


def static_featurizer(stats: IntegralStats) -> Featurizer:
    return lambda size, xs, ys: patch_descriptors(stats, xs, ys, size)


def check_dataset_images(images: Sequence[np.ndarray], coarsest: int) -> None:
    for i, img in enumerate(images):
        h, w = img.shape[:2]
        if min(h, w) < coarsest:
            raise ImageSizeError(f"image {i} is {w}x{h}, smaller than the {coarsest}px coarsest patch")


def static_points(image_id: int, sample: Sample, sizes: Sequence[int],
                  stats: IntegralStats | None = None) -> dict:
    stats = stats or IntegralStats.from_image(sample.image)
    feat = static_featurizer(stats)
    return {s: tile_points(image_id, stats.width, stats.height, s, feat, sample.mask) for s in sizes}


def build_reference_bank(dataset: Sequence[Sample], params: DetectParams,
                         exclude: int | None = None) -> ReferenceBank:
    if len(dataset) < 2:
        raise DatasetError("a reference bank needs at least two dataset entries")
    sizes = params.ladder.sizes
    check_dataset_images([s.image for s in dataset], sizes[-1])
    for i, s in enumerate(dataset):
        if s.mask.shape != s.image.shape[:2]:
            raise DimensionMismatchError(f"entry {i}: mask {s.mask.shape} vs image {s.image.shape[:2]}")
    per_image = [static_points(i, s, sizes) if i != exclude else {} for i, s in enumerate(dataset)]
    return assemble_bank(per_image, sizes, params, exclude)


def coarse_to_fine(height: int, width: int, bank: ReferenceBank, params: DetectParams,
                   featurize: Featurizer) -> SegmentResult:
    """Evaluate the coarsest tiling, then recurse into patches above the threshold."""
    sizes = list(params.ladder.sizes)
    if tuple(sizes) != tuple(bank.sizes):
        raise DimensionMismatchError(f"bank sizes {bank.sizes} do not match ladder {sizes}")
    if min(height, width) < sizes[-1]:
        raise DimensionMismatchError(f"{width}x{height} image is smaller than the coarsest patch {sizes[-1]}")
    tau = params.ladder.tau
    prob = np.zeros((height, width))
    queries = {}
    k_used = params.k
    xs, ys = tile_origins(width, height, sizes[-1])
    for level in range(len(sizes) - 1, -1, -1):
        size = sizes[level]
        queries[size] = len(xs)
        if len(xs) == 0:
            continue
        p, used = bank.index_for(size).regress(featurize(size, xs, ys), params.k)
        k_used = min(k_used, used)
        go = p > params.subdivide_threshold if level > 0 else np.zeros(len(p), dtype=bool)
        for x, y, v in zip(xs[~go], ys[~go], p[~go]):
            prob[y:y + size, x:x + size] = v
        if level > 0:
            child = sizes[level - 1]
            offs = np.arange(tau) * child
            oy, ox = np.meshgrid(offs, offs, indexing="ij")
            xs = (xs[go][:, None] + ox.ravel()[None, :]).ravel()
            ys = (ys[go][:, None] + oy.ravel()[None, :]).ravel()
    return SegmentResult(prob, queries, k_used)


def segment(img: np.ndarray, bank: ReferenceBank, params: DetectParams,
            stats: IntegralStats | None = None) -> SegmentResult:
    """Per-pixel instrument probability for a working-resolution image."""
    stats = stats or IntegralStats.from_image(img)
    return coarse_to_fine(stats.height, stats.width, bank, params, static_featurizer(stats))

