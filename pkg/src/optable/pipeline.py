"""Leave-one-out evaluation runs and hyperparameter searches over datasets."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .config import DYNAMIC, STATIC, Manifest, RunConfig
from .dynamic_detect import ActionPair, ChangeFeaturizer, ChangeMap, DynamicParams, change_points, detect_appearance
from .errors import DatasetError, ManifestError
from .evaluation import ReportRow, aggregate_scores, AzScore, score_row
from .features import IntegralStats
from .imaging import downsample2, downsample_mask, load_image, load_mask
from .optimize import IntParam, ParamSpace, SearchResult, dpso_optimize, random_grid_search
from .static_detect import (DetectParams, Sample, SegmentResult, assemble_bank, check_dataset_images,
                            segment, static_points)


@contextmanager
def _mapper(threads: int):
    if threads <= 1:
        yield map
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            yield pool.map


def working_image(img: np.ndarray, downsample: bool) -> np.ndarray:
    return downsample2(img) if downsample else img


def working_mask(mask: np.ndarray, downsample: bool) -> np.ndarray:
    return downsample_mask(mask) if downsample else mask


def load_static_dataset(manifest: Manifest, downsample: bool = True) -> list[Sample]:
    if manifest.kind != STATIC:
        raise ManifestError(f"expected a {STATIC} manifest, got {manifest.kind}")
    out = []
    for i in range(len(manifest)):
        img = load_image(manifest.path(i, "image"))
        mask = load_mask(manifest.path(i, "mask"))
        if mask.shape != img.shape[:2]:
            raise DatasetError(f"row {i}: mask and image sizes differ")
        out.append(Sample(working_image(img, downsample), working_mask(mask, downsample),
                          f"{i:03d}_{manifest.path(i, 'image').stem}"))
    return out


def load_dynamic_dataset(manifest: Manifest, downsample: bool = True) -> list[ActionPair]:
    if manifest.kind != DYNAMIC:
        raise ManifestError(f"expected a {DYNAMIC} manifest, got {manifest.kind}")
    out = []
    for i in range(len(manifest)):
        before = load_image(manifest.path(i, "before"))
        after = load_image(manifest.path(i, "after"))
        app = load_mask(manifest.path(i, "appeared"))
        dis = load_mask(manifest.path(i, "disappeared"))
        try:
            out.append(ActionPair(working_image(before, downsample), working_image(after, downsample),
                                  working_mask(app, downsample), working_mask(dis, downsample), f"{i:03d}"))
        except ValueError as exc:
            raise DatasetError(f"row {i}: {exc}") from exc
    return out


@dataclass
class LoocvResult:
    rows: list[ReportRow]
    results: list[SegmentResult]
    truths: list[np.ndarray] = field(repr=False, default_factory=list)

    @property
    def maps(self) -> list[np.ndarray]:
        return [r.prob for r in self.results]

    def summary(self) -> tuple[float, float] | None:
        scored = [AzScore(r.az, r.positives, r.negatives) for r in self.rows if r.az is not None]
        return aggregate_scores(scored) if scored else None

    def mean_az(self) -> float:
        s = self.summary()
        return s[0] if s else 0.0


class StaticLoocv:
    """Leave-one-out static segmentation with per-image caches reused across parameter sets."""

    def __init__(self, samples: Sequence[Sample], threads: int = 1):
        if len(samples) < 2:
            raise DatasetError("leave-one-out needs at least two images")
        self.samples = list(samples)
        self.threads = threads
        with _mapper(threads) as m:
            self.stats = list(m(lambda s: IntegralStats.from_image(s.image), self.samples))
        self._points: dict[int, list] = {}

    def min_side(self) -> int:
        return min(min(s.image.shape[:2]) for s in self.samples)

    def _points_for(self, sizes, mapper):
        missing = [s for s in sizes if s not in self._points]
        if missing:
            per_image = list(mapper(lambda i: static_points(i, self.samples[i], missing, self.stats[i]),
                                    range(len(self.samples))))
            for s in missing:
                self._points[s] = [pts[s] for pts in per_image]
        return [{s: self._points[s][i] for s in sizes} for i in range(len(self.samples))]

    def run(self, params: DetectParams) -> LoocvResult:
        sizes = params.ladder.sizes
        check_dataset_images([s.image for s in self.samples], sizes[-1])
        with _mapper(self.threads) as m:
            per_image = self._points_for(sizes, m)

            def fold(i):
                bank = assemble_bank(per_image, sizes, params, exclude=i)
                return segment(self.samples[i].image, bank, params, self.stats[i])

            results = list(m(fold, range(len(self.samples))))
        rows = [score_row(s.name, r.prob, s.mask) for s, r in zip(self.samples, results)]
        return LoocvResult(rows, results, [s.mask for s in self.samples])


def static_loocv(samples: Sequence[Sample], params: DetectParams, threads: int = 1) -> LoocvResult:
    return StaticLoocv(samples, threads).run(params)


def appearance_loocv(pairs: Sequence[ActionPair], params: DynamicParams, threads: int = 1) -> LoocvResult:
    """Leave-one-out appearance detection; pass swapped pairs for disappearance."""
    if len(pairs) < 2:
        raise DatasetError("leave-one-out needs at least two pairs")
    sizes = params.base.ladder.sizes
    check_dataset_images([p.after for p in pairs], sizes[-1])
    with _mapper(threads) as m:
        feats = list(m(lambda p: ChangeFeaturizer.for_pair(p, params), pairs))
        per_pair = list(m(lambda i: change_points(i, pairs[i], params, feats[i]), range(len(pairs))))

        def fold(i):
            bank = assemble_bank(per_pair, sizes, params.base, exclude=i, w_size=params.w_size)
            return detect_appearance(pairs[i], bank, params, feats[i])

        results = list(m(fold, range(len(pairs))))
    rows = [score_row(p.name, r.prob, p.appeared) for p, r in zip(pairs, results)]
    return LoocvResult(rows, results, [p.appeared for p in pairs])


def dynamic_loocv(pairs: Sequence[ActionPair], params: DynamicParams,
                  threads: int = 1) -> tuple[LoocvResult, LoocvResult]:
    """(appearance, disappearance) leave-one-out results."""
    appear = appearance_loocv(pairs, params, threads)
    disappear = appearance_loocv([p.swapped() for p in pairs], params, threads)
    return appear, disappear


def change_maps(appear: LoocvResult, disappear: LoocvResult) -> list[ChangeMap]:
    return [ChangeMap(a.prob, d.prob) for a, d in zip(appear.results, disappear.results)]


def static_space(cfg: RunConfig, min_side: int) -> ParamSpace:
    def valid(p):
        return p["p_min"] * p["tau"] ** (p["levels"] - 1) <= min_side

    return ParamSpace([
        IntParam("k", *cfg.k_range),
        IntParam("tau", values=tuple(cfg.tau_values)),
        IntParam("p_min", *cfg.p_min_range),
        IntParam("levels", *cfg.levels_range),
    ], valid)


def optimize_static(samples: Sequence[Sample], cfg: RunConfig, mapper=map) -> SearchResult:
    """D-PSO over (k, tau, p_min, levels) maximizing mean leave-one-out Az."""
    runner = StaticLoocv(samples, cfg.threads)
    space = static_space(cfg, runner.min_side())
    return dpso_optimize(space, lambda p: runner.run(cfg.detect_params(**p)).mean_az(), cfg.swarm_config(), mapper)


def optimize_wsize(pairs: Sequence[ActionPair], cfg: RunConfig, mapper=map) -> SearchResult:
    """Randomized grid search over the window size, other parameters fixed.

    The score is the mean of the appearance and disappearance mean Az.
    """
    def objective(w):
        appear, disappear = dynamic_loocv(pairs, cfg.dynamic_params(w_size=int(w)), cfg.threads)
        return 0.5 * (appear.mean_az() + disappear.mean_az())

    return random_grid_search(list(cfg.w_candidates), objective, cfg.w_draws, cfg.seed, mapper)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
