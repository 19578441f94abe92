"""Acceptance gate: one pass/fail line per criterion, shown in the terminal summary."""

import time

import numpy as np
import pytest

from conftest import record_criterion
from optable.cli import main
from optable.config import RunConfig, load_manifest
from optable.dynamic_detect import (ActionPair, best_match, build_change_bank, detect_appearance,
                                    detect_disappearance)
from optable.evaluation import format_summary, roc_az
from optable.features import IntegralStats, PatchRect, patch_descriptor, patch_descriptors
from optable.knn import APPROXIMATE, IndexParams, PointSet, brute_force_knn, build_index
from optable.optimize import IntParam, ParamSpace, SwarmConfig, dpso_optimize
from optable.pipeline import dynamic_loocv, load_dynamic_dataset, load_static_dataset, static_loocv
from optable.static_detect import DetectParams, build_reference_bank, segment
from optable.synth import generate_synthetic_dataset, item_rng, static_scene

pytestmark = pytest.mark.slow

DEFAULTS = RunConfig()


@pytest.fixture(scope="module")
def static_run(tmp_path_factory):
    start = time.perf_counter()
    d = tmp_path_factory.mktemp("acc_static")
    generate_synthetic_dataset("static", 12, 0, d)
    samples = load_static_dataset(load_manifest(d / "manifest.csv"))
    result = static_loocv(samples, DEFAULTS.detect_params(), DEFAULTS.threads)
    return samples, result, time.perf_counter() - start


@pytest.fixture(scope="module")
def dynamic_run(tmp_path_factory):
    start = time.perf_counter()
    d = tmp_path_factory.mktemp("acc_dynamic")
    generate_synthetic_dataset("dynamic", 12, 0, d)
    pairs = load_dynamic_dataset(load_manifest(d / "manifest.csv"))
    appear, disappear = dynamic_loocv(pairs, DEFAULTS.dynamic_params(), DEFAULTS.threads)
    return pairs, appear, disappear, time.perf_counter() - start


def test_reference_numbers_not_reproducible():
    p = DEFAULTS.detect_params()
    ok = (p.k, p.ladder.sizes, DEFAULTS.w_size) == (89, [5, 20, 80], 81)
    record_criterion("reference headline Az", ok,
                     "private dataset; static 0.982 / 0.015 and dynamic 0.947 / 0.045 are not reproducible here, "
                     "substitute criteria follow (defaults K=89, sizes 5/20/80, W=81 confirmed)", status="N/A")
    assert ok


def test_static_loocv(static_run):
    _, result, seconds = static_run
    mean, std = result.summary()
    ok = mean >= 0.95 and seconds < 60
    record_criterion("static LOOCV, 12 synthetic 640x480 images", ok,
                     f"mean/std Az {format_summary(mean, std)} (need >= 0.95), {seconds:.1f} s (need < 60)")
    assert ok


def test_dynamic_loocv(dynamic_run):
    _, appear, disappear, seconds = dynamic_run
    a, d = appear.summary(), disappear.summary()
    ok = a[0] >= 0.90 and d[0] >= 0.90 and seconds < 120
    record_criterion("dynamic LOOCV, 12 synthetic pairs, W=81", ok,
                     f"appearance {format_summary(*a)}, disappearance {format_summary(*d)} (need >= 0.90), "
                     f"{seconds:.1f} s (need < 120)")
    assert ok


def test_knn_oracle_equivalence():
    rng = np.random.default_rng(2024)
    pts = PointSet.from_arrays(rng.random((10_000, 14)), rng.random(10_000))
    queries = rng.random((100, 14))
    exact = build_index(pts)
    approx = build_index(pts, IndexParams(APPROXIMATE), seed=1)
    identical, recalls = True, {}
    for k in (1, 7, 89):
        got_idx, got_dist = exact.query(queries, k)
        approx_idx, _ = approx.query(queries, k)
        hits = 0
        for q, gi, gd, ai in zip(queries, got_idx, got_dist, approx_idx):
            bi, bd = brute_force_knn(pts, q, k)
            identical &= gi.tolist() == bi.tolist() and np.array_equal(gd, bd)
            hits += len(set(ai.tolist()) & set(bi.tolist()))
        recalls[k] = hits / (100 * k)
    ok = identical and min(recalls.values()) >= 0.95
    record_criterion("k-NN vs brute force, 10k x 100, k in {1, 7, 89}", ok,
                     f"exact identical={identical}, approximate recall "
                     + ", ".join(f"k={k}: {r:.3f}" for k, r in recalls.items()) + " (need >= 0.95)")
    assert ok


def _pairwise_az(scores, truth):
    pos, neg = scores[truth], scores[~truth]
    greater = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (greater + 0.5 * ties) / (len(pos) * len(neg))


def test_az_oracle():
    rng = np.random.default_rng(77)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 1001))
        truth = rng.random(n) < rng.uniform(0.05, 0.95)
        truth[0], truth[-1] = True, False
        levels = int(rng.integers(2, 50))
        scores = rng.integers(0, levels, n) / (levels - 1)
        worst = max(worst, abs(roc_az(scores, truth).value - _pairwise_az(scores, truth)))
    ok = worst <= 1e-9
    record_criterion("Az vs pairwise Mann-Whitney, 100 instances", ok, f"max |diff| {worst:.2e} (need <= 1e-9)")
    assert ok


def _dense(img, bank, params):
    sizes = params.ladder.sizes
    h, w = img.shape[:2]
    fine, top = sizes[0], sizes[-1]
    ys, xs = np.mgrid[0:(h // top) * top:fine, 0:(w // top) * top:fine]
    values, _ = bank.index_for(fine).regress(
        patch_descriptors(IntegralStats.from_image(img), xs.ravel(), ys.ravel(), fine), params.k)
    out = np.zeros((h, w))
    for x, y, v in zip(xs.ravel(), ys.ravel(), values):
        out[y:y + fine, x:x + fine] = v
    return out, xs.size


def test_coarse_to_fine_soundness(static_run):
    samples, result, _ = static_run
    forced = DetectParams(k=89, subdivide_threshold=-1.0)
    identical = True
    for i in range(5):
        bank = build_reference_bank(samples, forced, exclude=i)
        dense, _ = _dense(samples[i].image, bank, forced)
        identical &= np.array_equal(segment(samples[i].image, bank, forced).prob, dense)
    ratios = []
    for s, r in zip(samples, result.results):
        if s.mask.mean() < 0.30:
            h, w = s.image.shape[:2]
            dense_count = (h // 80) * (w // 80) * 16 * 16
            ratios.append(r.queries[5] / dense_count)
    ok = identical and bool(ratios) and max(ratios) < 0.5
    record_criterion("coarse-to-fine soundness", ok,
                     f"forced subdivision identical to dense on 5 images={identical}; fine-level queries vs dense "
                     f"on {len(ratios)} scenes under 30% foreground: max {max(ratios):.1%} (need < 50%)")
    assert ok


def test_swap_symmetry(dynamic_run):
    pairs = dynamic_run[0]
    params = DEFAULTS.dynamic_params()
    bank = build_change_bank([p.swapped() for p in pairs[5:]], params)
    same = 0
    for p in pairs[:5]:
        manual = ActionPair(p.after.copy(), p.before.copy(), p.disappeared, p.appeared)
        a = detect_disappearance(p, bank, params).prob
        b = detect_appearance(manual, bank, params).prob
        same += a.tobytes() == b.tobytes()
    ok = same == 5
    record_criterion("swap symmetry on 5 synthetic pairs", ok, f"{same}/5 bitwise identical")
    assert ok


def _scan(q_stats, rect, t_stats, radius):
    """Independent exhaustive scan: min squared distance and every shift attaining it."""
    v1 = patch_descriptor(q_stats, rect)
    ys, xs = np.mgrid[max(0, rect.y - radius):min(t_stats.height - rect.size, rect.y + radius) + 1,
                      max(0, rect.x - radius):min(t_stats.width - rect.size, rect.x + radius) + 1]
    cand = patch_descriptors(t_stats, xs.ravel(), ys.ravel(), rect.size)
    d2 = np.array([float(np.sum((c - v1) ** 2)) for c in cand])
    return d2.min(), {(int(x - rect.x), int(y - rect.y)) for x, y, v in zip(xs.ravel(), ys.ravel(), d2)
                      if v == d2.min()}


def test_best_match_correctness():
    w_size, radius = 21, 10
    queries = mismatches = 0
    for i in range(3):
        after, _ = static_scene(item_rng(31, i), 64, 64)
        before, _ = static_scene(item_rng(32, i), 64, 64)
        q, t = IntegralStats.from_image(after), IntegralStats.from_image(before)
        for size in (3, 5, 9):
            for y in range(0, 64 - size + 1, 7):
                for x in range(0, 64 - size + 1, 7):
                    rect = PatchRect(x, y, size)
                    m = best_match(q, rect, t, w_size)
                    best, shifts = _scan(q, rect, t, radius)
                    v1 = patch_descriptor(q, rect)
                    queries += 1
                    mismatches += not (float(np.sum((m.v2 - v1) ** 2)) == best and m.displacement in shifts)
    planted = recovered = 0
    base, _ = static_scene(item_rng(33, 0), 64, 64)
    stats = IntegralStats.from_image(base)
    for dx in range(-radius, radius + 1, 2):
        for dy in range(-radius, radius + 1, 3):
            shifted = IntegralStats.from_image(np.roll(base, (dy, dx), axis=(0, 1)))
            m = best_match(stats, PatchRect(26, 26, 9), shifted, w_size)
            planted += 1
            recovered += m.displacement == (dx, dy) and m.distance == 0.0
    ok = mismatches == 0 and recovered == planted
    record_criterion("best_match vs exhaustive scan and planted shifts", ok,
                     f"{queries - mismatches}/{queries} queries match the scan, "
                     f"{recovered}/{planted} planted shifts recovered exactly")
    assert ok


def test_dpso_sanity():
    space = ParamSpace([IntParam("a", -10, 10), IntParam("b", -10, 10), IntParam("c", -10, 10)])

    def f(p):
        return -((p["a"] - 3) ** 2 + (p["b"] + 2) ** 2 + (p["c"] - 5) ** 2)

    grid = np.mgrid[-10:11, -10:11, -10:11].reshape(3, -1).T
    optimum = max(map(tuple, grid.tolist()), key=lambda t: f(dict(zip("abc", t))))
    hits, monotone = 0, True
    for seed in range(100):
        r = dpso_optimize(space, f, SwarmConfig(swarm_size=20, iterations=30, seed=seed))
        hits += tuple(r.best.values()) == optimum
        scores = [t[1] for t in r.trace]
        monotone &= all(a <= b for a, b in zip(scores, scores[1:]))
    ok = hits >= 95 and monotone
    record_criterion("D-PSO on a 3-d integer quadratic", ok,
                     f"optimum {optimum} found in {hits}/100 seeds (need >= 95), traces monotone={monotone}")
    assert ok


def _tree(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def test_determinism(tmp_path):
    fast = ["--set", "k=15", "--set", "levels=2", "--set", "w_size=31"]
    point = ["--set", "k_range=10,20", "--set", "tau_values=3,4", "--set", "p_min_range=4,6",
             "--set", "levels_range=2,2", "--set", "swarm_size=3", "--set", "iterations=2"]
    grid = ["--set", "w_candidates=21,31,41", "--set", "w_draws=2"]

    def run(tag, threads):
        root = tmp_path / tag
        th = ["--threads", str(threads)]
        st, dy = root / "static", root / "dynamic"
        commands = [
            ["synth", "--kind", "static", "--n", "4", "--seed", "3", "--width", "320", "--height", "240",
             "--out", str(st)],
            ["synth", "--kind", "dynamic", "--n", "4", "--seed", "3", "--width", "320", "--height", "240",
             "--out", str(dy)],
            ["loocv-static", str(st / "manifest.csv"), "--out", str(root / "ls")] + fast + th,
            ["segment", str(st / "img_001.png"), "--manifest", str(st / "manifest.csv"),
             "--out", str(root / "seg")] + fast + th,
            ["loocv-dynamic", str(dy / "manifest.csv"), "--out", str(root / "ld")] + fast + th,
            ["detect", str(dy / "pair_000_before.png"), str(dy / "pair_000_after.png"),
             "--manifest", str(dy / "manifest.csv"), "--out", str(root / "det")] + fast + th,
            ["render", str(dy / "pair_000_before.png"), str(dy / "pair_000_after.png"),
             str(root / "det" / "appeared.png"), str(root / "det" / "disappeared.png"),
             "--output", str(root / "render" / "overlay.png")] + th,
            ["optimize", str(st / "manifest.csv"), "--out", str(root / "opt")] + fast + point + th,
            ["optimize", str(dy / "manifest.csv"), "--mode", "wsize-grid", "--out", str(root / "grid")]
            + fast + grid + th,
        ]
        for cmd in commands:
            assert main(cmd) == 0, cmd
        return _tree(root)

    first, again, threaded = run("t1a", 1), run("t1b", 1), run("t4", 4)
    differing = sorted({k for k in first if first[k] != again.get(k) or first[k] != threaded.get(k)}
                       | (set(first) ^ set(threaded)))
    ok = not differing
    record_criterion("determinism across reruns and thread budgets 1 and 4", ok,
                     f"{len(first)} output files over 9 commands, {len(differing)} differ"
                     + (f": {differing[:5]}" if differing else ""))
    assert ok
