"""Synthetic operating-table scenes standing in for the private surgical dataset.

Each scene is a textured green tablecloth, zero to two beige towel regions
(background, never in masks) and three to eight convex objects: elongated
metallic or colored instruments and rounded containers. Objects are
rendered once into their own sprite so moving one only translates pixels.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw
from scipy import ndimage

from .imaging import save_image, save_mask

DEFAULT_WIDTH = 640
DEFAULT_HEIGHT = 480
MAX_JITTER = 15

_PALETTE = np.array([
    [40, 70, 200],    # blue handle
    [120, 50, 160],   # purple
    [200, 50, 50],    # red
    [230, 140, 30],   # orange
    [225, 210, 60],   # yellow
    [235, 235, 240],  # white plastic
])


@dataclass
class Sprite:
    rgb: np.ndarray  # (h, w, 3) uint8
    alpha: np.ndarray  # (h, w) bool
    x: int = 0
    y: int = 0

    @property
    def shape(self):
        return self.alpha.shape


def _convex_polygon(points) -> np.ndarray:
    """Rasterize a polygon into a tight boolean sprite."""
    pts = np.asarray(points, dtype=np.float64)
    lo = np.floor(pts.min(axis=0)).astype(int) - 1
    hi = np.ceil(pts.max(axis=0)).astype(int) + 2
    w, h = hi - lo
    canvas = Image.new("L", (int(w), int(h)), 0)
    ImageDraw.Draw(canvas).polygon([tuple(p) for p in (pts - lo)], fill=255)
    return np.array(canvas) > 0


def tablecloth(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    base = np.array([35, 125, 70], dtype=np.float64) + rng.uniform(-3, 3, 3)
    coarse = rng.normal(0.0, 1.0, (height // 40 + 2, width // 40 + 2))
    low = ndimage.zoom(coarse, (height / coarse.shape[0], width / coarse.shape[1]), order=1)
    low = low[:height, :width]
    img = base + 3.0 * low[..., None] + rng.normal(0.0, 3.0, (height, width, 3))
    return img


def _shade(rng: np.random.Generator, alpha: np.ndarray, color: np.ndarray,
           axis_angle: float, metallic: bool) -> np.ndarray:
    h, w = alpha.shape
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    yy -= (h - 1) / 2.0
    xx -= (w - 1) / 2.0
    across = -np.sin(axis_angle) * xx + np.cos(axis_angle) * yy
    half = max(np.abs(across[alpha]).max(), 1.0)
    t = across / half
    if metallic:
        shade = 0.75 + 0.45 * np.exp(-((t - 0.2) ** 2) / 0.05)
    else:
        shade = 0.9 + 0.15 * (1.0 - t * t)
    rgb = color[None, None, :] * shade[..., None] + rng.normal(0.0, 4.0, (h, w, 3))
    return np.clip(np.floor(rgb + 0.5), 0, 255).astype(np.uint8)


def random_object(rng: np.random.Generator, scale: float = 1.0) -> Sprite:
    """An instrument (elongated tapered bar) or a container (rounded polygon)."""
    angle = rng.uniform(0.0, np.pi)
    if rng.random() < 0.75:
        length = rng.uniform(70, 200) * scale
        width = rng.uniform(9, 24) * scale
        tip = rng.uniform(0.1, 0.3) * length
        body = length - tip
        local = np.array([[-body / 2, -width / 2], [body / 2, -width / 2],
                          [body / 2 + tip, 0.0], [body / 2, width / 2], [-body / 2, width / 2]])
    else:
        rx, ry = rng.uniform(20, 50, 2) * scale
        theta = np.linspace(0.0, 2 * np.pi, 16, endpoint=False)
        local = np.stack([rx * np.cos(theta), ry * np.sin(theta)], axis=1)
    rot = np.array([[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]])
    alpha = _convex_polygon(local @ rot.T)
    metallic = rng.random() < 0.55
    if metallic:
        g = rng.uniform(120, 215)
        color = np.array([g, g, g + rng.uniform(0, 15)])
    else:
        color = _PALETTE[rng.integers(len(_PALETTE))] + rng.uniform(-15, 15, 3)
    return Sprite(_shade(rng, alpha, color, angle, metallic), alpha)


def random_towel(rng: np.random.Generator, scale: float = 1.0) -> Sprite:
    rx, ry = rng.uniform(60, 140, 2) * scale
    theta = np.sort(rng.uniform(0.0, 2 * np.pi, 12))
    local = np.stack([rx * np.cos(theta), ry * np.sin(theta)], axis=1)
    alpha = _convex_polygon(local)
    h, w = alpha.shape
    color = np.array([215, 195, 160], dtype=np.float64) + rng.uniform(-10, 10, 3)
    weave = 8.0 * np.sin(np.arange(w) * 1.3)[None, :] * np.sin(np.arange(h) * 1.1)[:, None]
    rgb = color + weave[..., None] + rng.normal(0.0, 7.0, (h, w, 3))
    return Sprite(np.clip(np.floor(rgb + 0.5), 0, 255).astype(np.uint8), alpha)


def place(rng: np.random.Generator, sprite: Sprite, height: int, width: int) -> Sprite:
    h, w = sprite.shape
    sprite.x = int(rng.integers(0, max(width - w, 0) + 1))
    sprite.y = int(rng.integers(0, max(height - h, 0) + 1))
    return sprite


def compose(background: np.ndarray, sprites, height: int, width: int):
    """Paint sprites in order; returns (uint8 image, per-pixel topmost sprite id, -1 = none)."""
    img = background.copy()
    owner = np.full((height, width), -1, dtype=np.int64)
    for sid, sp in enumerate(sprites):
        h, w = sp.shape
        y0, x0 = max(sp.y, 0), max(sp.x, 0)
        y1, x1 = min(sp.y + h, height), min(sp.x + w, width)
        if y1 <= y0 or x1 <= x0:
            continue
        a = sp.alpha[y0 - sp.y:y1 - sp.y, x0 - sp.x:x1 - sp.x]
        img[y0:y1, x0:x1][a] = sp.rgb[y0 - sp.y:y1 - sp.y, x0 - sp.x:x1 - sp.x][a]
        owner[y0:y1, x0:x1][a] = sid
    return np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8), owner


def _background(rng, height, width):
    scale = min(height / DEFAULT_HEIGHT, width / DEFAULT_WIDTH)
    cloth = tablecloth(rng, height, width)
    towels = [place(rng, random_towel(rng, scale), height, width) for _ in range(rng.integers(0, 3))]
    return cloth, towels, scale


def static_scene(rng: np.random.Generator, width: int = DEFAULT_WIDTH,
                 height: int = DEFAULT_HEIGHT) -> tuple[np.ndarray, np.ndarray]:
    """One (image, instrument mask) pair."""
    cloth, towels, scale = _background(rng, height, width)
    objects = [place(rng, random_object(rng, scale), height, width) for _ in range(rng.integers(3, 9))]
    img, owner = compose(cloth, towels + objects, height, width)
    return img, owner >= len(towels)


def action_pair(rng: np.random.Generator, width: int = DEFAULT_WIDTH, height: int = DEFAULT_HEIGHT,
                n_added: int | None = None, n_removed: int | None = None) -> dict:
    """A before/after pair with appeared (on 'after') and disappeared (on 'before') masks."""
    cloth, towels, scale = _background(rng, height, width)
    objects = [place(rng, random_object(rng, scale), height, width) for _ in range(rng.integers(3, 9))]
    if n_added is None or n_removed is None:
        while True:
            added, removed = int(rng.integers(0, 3)), int(rng.integers(0, 3))
            if added + removed > 0:
                break
        n_added = added if n_added is None else n_added
        n_removed = removed if n_removed is None else n_removed
    n_removed = min(n_removed, len(objects))
    removed_ids = set(rng.choice(len(objects), n_removed, replace=False).tolist())
    kept = []
    jitter = int(round(MAX_JITTER * scale))
    for i, sp in enumerate(objects):
        if i in removed_ids:
            continue
        h, w = sp.shape
        moved = Sprite(sp.rgb, sp.alpha,
                       int(np.clip(sp.x + rng.integers(-jitter, jitter + 1), 0, max(width - w, 0))),
                       int(np.clip(sp.y + rng.integers(-jitter, jitter + 1), 0, max(height - h, 0))))
        kept.append(moved)
    new = [place(rng, random_object(rng, scale), height, width) for _ in range(n_added)]

    before, owner_b = compose(cloth, towels + objects, height, width)
    after, owner_a = compose(cloth, towels + kept + new, height, width)
    nt = len(towels)
    disappeared = np.isin(owner_b, [nt + i for i in sorted(removed_ids)])
    appeared = owner_a >= nt + len(kept)
    return {"before": before, "after": after, "appeared": appeared, "disappeared": disappeared,
            "n_added": n_added, "n_removed": n_removed}


def item_rng(seed: int, i: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, i]))


def generate_synthetic_dataset(kind: str, n: int, seed: int, out_dir, width: int = DEFAULT_WIDTH,
                               height: int = DEFAULT_HEIGHT):
    """Write n scenes (or pairs) plus ``manifest.csv`` and ``meta.json`` into out_dir."""
    from .config import DYNAMIC, STATIC, Manifest

    if kind not in (STATIC, DYNAMIC):
        raise ValueError(f"unknown dataset kind {kind!r}")
    if n < 2:
        raise ValueError("a dataset needs at least two entries")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, meta = [], []
    for i in range(n):
        rng = item_rng(seed, i)
        if kind == STATIC:
            img, mask = static_scene(rng, width, height)
            names = (f"img_{i:03d}.png", f"mask_{i:03d}.png")
            save_image(out / names[0], img)
            save_mask(out / names[1], mask)
            meta.append({"row": i, "foreground": float(mask.mean())})
        else:
            pair = action_pair(rng, width, height)
            names = tuple(f"pair_{i:03d}_{part}.png" for part in ("before", "after", "appeared", "disappeared"))
            save_image(out / names[0], pair["before"])
            save_image(out / names[1], pair["after"])
            save_mask(out / names[2], pair["appeared"])
            save_mask(out / names[3], pair["disappeared"])
            meta.append({"row": i, "added": pair["n_added"], "removed": pair["n_removed"]})
        rows.append(names)
    manifest = Manifest(kind, rows, out)
    manifest.write(out / "manifest.csv")
    with open(out / "meta.json", "w") as fh:
        json.dump({"kind": kind, "seed": seed, "width": width, "height": height, "items": meta},
                  fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest
