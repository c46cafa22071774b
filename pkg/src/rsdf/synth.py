"""Seeded synthetic RGBD scenes: textured far background plane plus 1-3 nearer convex objects."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .imageio import rgb_to_lab, write_gray16_png, write_mask_png, write_rgb_png

MIN_OBJECT_FRACTION = 0.04
MAX_GT_FRACTION = 0.5
MIN_LAB_DISTANCE = 25.0


@dataclass
class SynthScene:
    rgb: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) uint16, millimetres
    gt: np.ndarray  # (H, W) uint8 {0, 1}


def _shape_mask(kind, h, w, rng):
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    ry = rng.uniform(0.12, 0.3) * h
    rx = rng.uniform(0.12, 0.3) * w
    r = max(ry, rx)
    cy = rng.uniform(r, h - 1 - r) if h - 1 - 2 * r > 0 else (h - 1) / 2
    cx = rng.uniform(r, w - 1 - r) if w - 1 - 2 * r > 0 else (w - 1) / 2
    th = rng.uniform(0, np.pi)
    u = (xx - cx) * np.cos(th) + (yy - cy) * np.sin(th)
    v = -(xx - cx) * np.sin(th) + (yy - cy) * np.cos(th)
    if kind == 0:
        return (u / rx) ** 2 + (v / ry) ** 2 <= 1.0
    if kind == 1:
        return (np.abs(u) <= rx * 0.8) & (np.abs(v) <= ry * 0.8)
    # convex polygon: vertices on an ellipse at sorted angles
    k = int(rng.integers(3, 8))
    ang = np.sort(rng.uniform(0, 2 * np.pi, size=k))
    px, py = rx * np.cos(ang), ry * np.sin(ang)
    inside = np.ones((h, w), dtype=bool)
    for i in range(k):
        x0, y0, x1, y1 = px[i], py[i], px[(i + 1) % k], py[(i + 1) % k]
        inside &= (x1 - x0) * (v - y0) - (y1 - y0) * (u - x0) >= 0
    return inside


def _color_far_from(rng, ref_lab, min_dist):
    while True:
        c = rng.integers(0, 256, size=3)
        if np.linalg.norm(rgb_to_lab(c / 255.0) - ref_lab) >= min_dist:
            return c.astype(np.float64)


def make_scene(rng, height=64, width=64):
    """One scene; rejection-sampled until every generator contract holds."""
    while True:
        base = rng.integers(30, 226, size=3).astype(np.float64)
        base_lab = rgb_to_lab(base / 255.0)
        # low-contrast texture: per-pixel noise plus a gentle stripe pattern
        yy, xx = np.mgrid[0:height, 0:width]
        stripes = 6.0 * np.sin(2 * np.pi * (xx * rng.uniform(0.05, 0.2) + yy * rng.uniform(0.05, 0.2)))
        rgb = base + stripes[..., None] + rng.normal(0.0, 4.0, size=(height, width, 3))
        tilt = rng.uniform(-300, 300)
        depth = 3000.0 + tilt * (yy / height - 0.5) + rng.normal(0.0, 25.0, size=(height, width))
        gt = np.zeros((height, width), dtype=bool)
        ok = True
        for _ in range(int(rng.integers(1, 4))):
            mask = _shape_mask(int(rng.integers(0, 3)), height, width, rng)
            if mask.sum() < MIN_OBJECT_FRACTION * height * width:
                ok = False
                break
            color = _color_far_from(rng, base_lab, MIN_LAB_DISTANCE + 10.0)
            shade = rng.normal(0.0, 3.0, size=(height, width, 3))
            rgb[mask] = (color + shade)[mask]
            z = rng.uniform(900.0, 2000.0)
            depth[mask] = (z + rng.normal(0.0, 15.0, size=(height, width)))[mask]
            gt |= mask
        frac = gt.mean()
        if not ok or frac == 0 or frac >= MAX_GT_FRACTION:
            continue
        rgb8 = np.clip(np.rint(rgb), 0, 255).astype(np.uint8)
        lab = rgb_to_lab(rgb8 / 255.0)
        if np.linalg.norm(lab[gt].mean(0) - lab[~gt].mean(0)) < MIN_LAB_DISTANCE:
            continue
        return SynthScene(rgb=rgb8, depth=np.clip(np.rint(depth), 0, 65535).astype(np.uint16), gt=gt.astype(np.uint8))


def generate(n_images, seed=0, height=64, width=64):
    """Yield ``(name, scene)``; scene i depends only on ``(seed, i)``."""
    children = np.random.SeedSequence(seed).spawn(n_images)
    for i, ss in enumerate(children):
        yield f"img_{i:04d}", make_scene(np.random.default_rng(ss), height, width)


def write_dataset(out_dir, n_images, seed=0, height=64, width=64):
    """Write ``rgb/``, ``depth/`` (16-bit) and ``gt/`` PNGs; returns the image names."""
    if n_images < 1:
        raise ValueError("n_images must be >= 1")
    for sub in ("rgb", "depth", "gt"):
        os.makedirs(os.path.join(out_dir, sub), exist_ok=True)
    names = []
    for name, sc in generate(n_images, seed, height, width):
        write_rgb_png(sc.rgb, os.path.join(out_dir, "rgb", name + ".png"))
        write_gray16_png(sc.depth, os.path.join(out_dir, "depth", name + ".png"))
        write_mask_png(sc.gt, os.path.join(out_dir, "gt", name + ".png"))
        names.append(name)
    return names
