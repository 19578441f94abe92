"""Appearance / disappearance detection between a 'before' and an 'after' frame.

Each 'after' patch is matched to the most similar patch of the 'before'
frame inside a search window centered on it; the difference of the two
descriptors is then scored by k-NN regression over a bank of labeled
changes. Disappearance is appearance on the swapped pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DatasetError, DimensionMismatchError
from .features import IntegralStats, PatchRect, descriptor_field, patch_descriptor
from .static_detect import (DetectParams, ReferenceBank, SegmentResult, assemble_bank,
                            check_dataset_images, coarse_to_fine, tile_points)


@dataclass(frozen=True)
class DynamicParams:
    """``stride=None`` searches every pixel at the finest level and every size//5 pixels above it."""

    base: DetectParams = field(default_factory=DetectParams)
    w_size: int = 81
    stride: int | None = None

    def __post_init__(self):
        if self.w_size < 1 or self.w_size % 2 == 0:
            raise ValueError(f"w_size must be odd and >= 1, got {self.w_size}")
        if self.stride is not None and self.stride < 1:
            raise ValueError("stride must be >= 1")

    @property
    def radius(self) -> int:
        return (self.w_size - 1) // 2

    def stride_for(self, size: int) -> int:
        if self.stride is not None:
            return self.stride
        if size == self.base.ladder.p_min:
            return 1
        return max(1, size // 5)


@dataclass(frozen=True)
class ActionPair:
    before: np.ndarray
    after: np.ndarray
    appeared: np.ndarray | None = None  # on 'after'
    disappeared: np.ndarray | None = None  # on 'before'
    name: str = ""

    def __post_init__(self):
        if self.before.shape != self.after.shape:
            raise DimensionMismatchError(f"before {self.before.shape} and after {self.after.shape} differ")
        for m in (self.appeared, self.disappeared):
            if m is not None and m.shape != self.before.shape[:2]:
                raise DimensionMismatchError(f"mask {m.shape} does not match image {self.before.shape[:2]}")

    def swapped(self) -> "ActionPair":
        return ActionPair(self.after, self.before, self.disappeared, self.appeared, self.name)


@dataclass(frozen=True)
class MatchResult:
    rect: PatchRect
    displacement: tuple[int, int]  # (dx, dy)
    distance: float
    v2: np.ndarray


@dataclass(frozen=True)
class ChangeMap:
    appeared: np.ndarray  # on 'after'
    disappeared: np.ndarray  # on 'before'


def _axis_steps(pos: int, limit: int, radius: int, stride: int) -> tuple[int, int]:
    """Range of step counts k with 0 <= pos + k*stride <= limit and |k*stride| <= radius."""
    return -(min(radius, pos) // stride), min(radius, limit - pos) // stride


def _match_in_field(fld: np.ndarray, norms: np.ndarray, x: int, y: int, v1: np.ndarray,
                    radius: int, stride: int) -> tuple[int, int, float]:
    """Best (dx, dy, squared distance) over the clipped window; ties to the shortest shift.

    ``norms`` holds the squared norm of every field entry. A dot-product
    expansion shortlists near-minimal candidates, which are then rescored
    exactly, so the answer equals a plain exhaustive scan.
    """
    kx0, kx1 = _axis_steps(x, fld.shape[1] - 1, radius, stride)
    ky0, ky1 = _axis_steps(y, fld.shape[0] - 1, radius, stride)
    rows = slice(y + ky0 * stride, y + ky1 * stride + 1, stride)
    cols = slice(x + kx0 * stride, x + kx1 * stride + 1, stride)
    sub = fld[rows, cols]
    sub_norms = norms[rows, cols]
    vv = float(v1 @ v1)
    approx = sub_norms - 2.0 * (sub @ v1) + vv
    margin = 1e-9 * (1.0 + sub_norms.max() + vv)
    iy, ix = np.nonzero(approx <= approx.min() + margin)
    diff = sub[iy, ix] - v1
    d2 = np.sum(diff * diff, axis=-1)
    best = d2.min()
    keep = d2 == best
    dy = (iy[keep] + ky0) * stride
    dx = (ix[keep] + kx0) * stride
    pick = np.lexsort((dx, dy, dx * dx + dy * dy))[0]
    return int(dx[pick]), int(dy[pick]), float(best)


def _squared_norms(fld: np.ndarray) -> np.ndarray:
    return np.sum(fld * fld, axis=-1)


def best_match(query_stats: IntegralStats, rect: PatchRect, target_stats: IntegralStats,
               w_size: int, stride: int = 1) -> MatchResult:
    """Search ``target_stats`` around ``rect`` for the patch closest to the query patch."""
    if (query_stats.width, query_stats.height) != (target_stats.width, target_stats.height):
        raise DimensionMismatchError("query and target images differ in size")
    if w_size < 1 or w_size % 2 == 0 or stride < 1:
        raise ValueError("w_size must be odd and >= 1, stride >= 1")
    v1 = patch_descriptor(query_stats, rect)
    fld = descriptor_field(target_stats, rect.size)
    dx, dy, d2 = _match_in_field(fld, _squared_norms(fld), rect.x, rect.y, v1, (w_size - 1) // 2, stride)
    return MatchResult(PatchRect(rect.x + dx, rect.y + dy, rect.size), (dx, dy),
                       float(np.sqrt(d2)), fld[rect.y + dy, rect.x + dx].copy())


def change_descriptor(v1, v2) -> np.ndarray:
    return np.asarray(v2, dtype=np.float64) - np.asarray(v1, dtype=np.float64)


class ChangeFeaturizer:
    """Change descriptors for tiles of ``query`` matched into ``target``.

    Results are memoized per tile, so one instance can serve both the bank
    entries of an image and its own test-time queries.
    """

    def __init__(self, query: IntegralStats, target: IntegralStats, params: DynamicParams):
        if (query.width, query.height) != (target.width, target.height):
            raise DimensionMismatchError("query and target images differ in size")
        self.query = query
        self.target = target
        self.params = params
        self._fields: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
        self._memo: dict[tuple[int, int, int], np.ndarray] = {}

    @classmethod
    def for_pair(cls, pair: ActionPair, params: DynamicParams) -> "ChangeFeaturizer":
        return cls(IntegralStats.from_image(pair.after), IntegralStats.from_image(pair.before), params)

    @property
    def width(self) -> int:
        return self.query.width

    @property
    def height(self) -> int:
        return self.query.height

    def _field_pair(self, size: int):
        if size not in self._fields:
            tf = descriptor_field(self.target, size)
            self._fields[size] = (descriptor_field(self.query, size), tf, _squared_norms(tf))
        return self._fields[size]

    def __call__(self, size: int, xs, ys) -> np.ndarray:
        qf, tf, tn = self._field_pair(size)
        radius = self.params.radius
        stride = self.params.stride_for(size)
        out = np.empty((len(xs), qf.shape[-1]))
        for i, (x, y) in enumerate(zip(np.asarray(xs).tolist(), np.asarray(ys).tolist())):
            key = (size, x, y)
            hit = self._memo.get(key)
            if hit is None:
                v1 = qf[y, x]
                dx, dy, _ = _match_in_field(tf, tn, x, y, v1, radius, stride)
                hit = change_descriptor(v1, tf[y + dy, x + dx])
                self._memo[key] = hit
            out[i] = hit
        return out


def change_points(pair_id: int, pair: ActionPair, params: DynamicParams,
                  featurizer: ChangeFeaturizer | None = None) -> dict:
    """Labeled change descriptors for every ladder tile of one pair's 'after' frame."""
    if pair.appeared is None:
        raise DatasetError(f"pair {pair_id} has no appeared-mask ground truth")
    feat = featurizer or ChangeFeaturizer.for_pair(pair, params)
    return {s: tile_points(pair_id, feat.width, feat.height, s, feat, pair.appeared)
            for s in params.base.ladder.sizes}


def build_change_bank(dataset: Sequence[ActionPair], params: DynamicParams,
                      exclude: int | None = None) -> ReferenceBank:
    """Appearance bank; pass swapped pairs to build the disappearance bank."""
    if len(dataset) < 2:
        raise DatasetError("a change bank needs at least two pairs")
    check_dataset_images([p.after for p in dataset], params.base.ladder.coarsest)
    for i, p in enumerate(dataset):
        if p.appeared is None:
            raise DatasetError(f"pair {i} has no appeared-mask ground truth")
    per_pair = [change_points(i, p, params) if i != exclude else {} for i, p in enumerate(dataset)]
    return assemble_bank(per_pair, params.base.ladder.sizes, params.base, exclude, params.w_size)


def _check_bank(bank: ReferenceBank, params: DynamicParams) -> None:
    if bank.w_size is not None and bank.w_size != params.w_size:
        raise DimensionMismatchError(f"bank built with w_size {bank.w_size}, detecting with {params.w_size}")


def detect_appearance(pair: ActionPair, bank: ReferenceBank, params: DynamicParams,
                      featurizer: ChangeFeaturizer | None = None) -> SegmentResult:
    """Probability, on the 'after' frame, that each pixel belongs to an appeared object."""
    _check_bank(bank, params)
    feat = featurizer or ChangeFeaturizer.for_pair(pair, params)
    return coarse_to_fine(feat.height, feat.width, bank, params.base, feat)


def detect_disappearance(pair: ActionPair, bank: ReferenceBank, params: DynamicParams) -> SegmentResult:
    """Probability, on the 'before' frame, of disappeared objects; ``bank`` holds swapped-pair changes."""
    return detect_appearance(pair.swapped(), bank, params)


def detect_changes(pair: ActionPair, banks: tuple[ReferenceBank, ReferenceBank],
                   params: DynamicParams) -> ChangeMap:
    appear_bank, disappear_bank = banks
    return ChangeMap(detect_appearance(pair, appear_bank, params).prob,
                     detect_disappearance(pair, disappear_bank, params).prob)
