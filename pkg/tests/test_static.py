import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from optable.errors import DatasetError, DimensionMismatchError, ImageSizeError
from optable.features import IntegralStats, PatchRect, patch_descriptors
from optable.static_detect import (DetectParams, Sample, ScaleLadder, build_reference_bank, coarse_to_fine,
                                   patch_label, scale_sizes, segment, static_featurizer, tile_labels)

SMALL = ScaleLadder(4, 3, 3)  # 4, 12, 36


def test_scale_sizes():
    assert scale_sizes(5, 4, 3) == [5, 20, 80]
    assert scale_sizes(3, 2, 1) == [3]
    for bad in ((0, 4, 3), (5, 1, 3), (5, 4, 0)):
        with pytest.raises(ValueError):
            scale_sizes(*bad)


def test_patch_label_examples():
    mask = np.zeros((10, 10), bool)
    mask[0:2, 0:5] = True
    assert patch_label(mask, PatchRect(0, 0, 5)) == pytest.approx(0.4)
    assert patch_label(mask, PatchRect(5, 5, 5)) == 0.0
    assert patch_label(np.ones((4, 4), bool), PatchRect(0, 0, 4)) == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 8))
def test_tile_labels_match_recount(seed, size):
    r = np.random.default_rng(seed)
    mask = r.random((20, 23)) < 0.3
    xs = r.integers(0, 23 - size + 1, 10)
    ys = r.integers(0, 20 - size + 1, 10)
    expected = [mask[y:y + size, x:x + size].mean() for x, y in zip(xs, ys)]
    assert np.allclose(tile_labels(mask, xs, ys, size), expected, atol=0)


def _blank_samples(n, h=100, w=100):
    r = np.random.default_rng(1)
    out = []
    for i in range(n):
        img = r.integers(0, 256, (h, w, 3), dtype=np.uint8)
        mask = np.zeros((h, w), bool)
        mask[10:40, 20:70] = True
        out.append(Sample(img, mask, str(i)))
    return out


def test_bank_sizes_and_exclusion():
    data = _blank_samples(3)
    params = DetectParams(k=3, ladder=ScaleLadder(20, 2, 2))
    bank = build_reference_bank(data, params, exclude=1)
    pts = bank.index_for(20).points
    assert len(pts) == 2 * 25
    assert set(pts.image_ids.tolist()) == {0, 2}
    for i in range(len(pts)):
        x, y, s = pts.rects[i]
        assert pts.labels[i] == pytest.approx(data[pts.image_ids[i]].mask[y:y + s, x:x + s].mean())
    stats = IntegralStats.from_image(data[2].image)
    own = pts.image_ids == 2
    assert np.array_equal(pts.descriptors[own],
                          patch_descriptors(stats, pts.rects[own, 0], pts.rects[own, 1], 20))


def test_bank_errors():
    params = DetectParams(k=3, ladder=ScaleLadder(20, 2, 2))
    with pytest.raises(DatasetError):
        build_reference_bank(_blank_samples(1), params)
    with pytest.raises(ImageSizeError):
        build_reference_bank(_blank_samples(2, 30, 30), params)
    bad = _blank_samples(2)
    bad[0] = Sample(bad[0].image, bad[0].mask[:50])
    with pytest.raises(DimensionMismatchError):
        build_reference_bank(bad, params)


def _dense_oracle(img, bank, params):
    """Evaluate every finest tile inside the coarse tiling and paint it."""
    sizes = params.ladder.sizes
    h, w = img.shape[:2]
    ch, cw = (h // sizes[-1]) * sizes[-1], (w // sizes[-1]) * sizes[-1]
    stats = IntegralStats.from_image(img)
    fine = sizes[0]
    prob = np.zeros((h, w))
    for y in range(0, ch, fine):
        for x in range(0, cw, fine):
            d = patch_descriptors(stats, [x], [y], fine)
            v, _ = bank.index_for(fine).regress(d, params.k)
            prob[y:y + fine, x:x + fine] = v[0]
    return prob


def test_forced_subdivision_equals_dense(static_samples):
    params = DetectParams(k=9, ladder=SMALL, subdivide_threshold=-1.0)
    bank = build_reference_bank(static_samples, params, exclude=0)
    img = static_samples[0].image
    res = segment(img, bank, params)
    assert np.array_equal(res.prob, _dense_oracle(img, bank, params))


def test_only_passing_patches_are_refined(static_samples):
    params = DetectParams(k=9, ladder=SMALL)
    bank = build_reference_bank(static_samples, params, exclude=1)
    stats = IntegralStats.from_image(static_samples[1].image)
    inner = static_featurizer(stats)
    calls = []

    def spy(size, xs, ys):
        d = inner(size, xs, ys)
        calls.append((size, np.asarray(xs).copy(), np.asarray(ys).copy(), d))
        return d

    res = coarse_to_fine(stats.height, stats.width, bank, params, spy)
    assert [c[0] for c in calls] == [36, 12, 4]
    for (size, xs, ys, d), (child, cxs, cys, _) in zip(calls, calls[1:]):
        p, _ = bank.index_for(size).regress(d, params.k)
        parents = {(int(x), int(y)) for x, y, v in zip(xs, ys, p) if v > 0}
        assert len(cxs) == 9 * len(parents)
        for x, y in zip(cxs, cys):
            assert (int(x - x % size), int(y - y % size)) in parents
    assert res.queries == {s: len(c[1]) for s, c, in zip((36, 12, 4), calls)}


def test_pruned_patch_paints_its_own_value(static_samples):
    # every reference label is 0, so the coarsest level stops immediately
    empty = [Sample(s.image, np.zeros_like(s.mask), s.name) for s in static_samples]
    params = DetectParams(k=5, ladder=SMALL)
    bank = build_reference_bank(empty, params, exclude=0)
    res = segment(static_samples[0].image, bank, params)
    assert np.all(res.prob == 0)
    assert res.queries[4] == 0 and res.queries[12] == 0


def test_map_range_and_determinism(static_samples):
    params = DetectParams(k=9, ladder=SMALL)
    bank = build_reference_bank(static_samples, params, exclude=2)
    a = segment(static_samples[2].image, bank, params)
    b = segment(static_samples[2].image, build_reference_bank(static_samples, params, exclude=2), params)
    assert a.prob.shape == static_samples[2].image.shape[:2]
    assert np.all((a.prob >= 0) & (a.prob <= 1))
    assert np.array_equal(a.prob, b.prob)


def test_ladder_mismatch(static_samples):
    bank = build_reference_bank(static_samples, DetectParams(k=3, ladder=SMALL))
    with pytest.raises(DimensionMismatchError):
        segment(static_samples[0].image, bank, DetectParams(k=3, ladder=ScaleLadder(4, 3, 2)))


def test_threshold_must_stay_below_one():
    with pytest.raises(ValueError):
        DetectParams(subdivide_threshold=1.0)
