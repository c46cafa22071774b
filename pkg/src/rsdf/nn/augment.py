"""Image-level training augmentation: mirror, translation by cropping, RGB gain jitter."""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

CROP_KEEP = 0.9
JITTER = 0.1


def hflip(img):
    return replace(
        img,
        rgb=img.rgb[:, ::-1].copy(),
        lab=img.lab[:, ::-1].copy(),
        depth=img.depth[:, ::-1].copy(),
        gt=None if img.gt is None else img.gt[:, ::-1].copy(),
    )


def crop(img, top, left, height, width):
    sl = (slice(top, top + height), slice(left, left + width))
    return replace(
        img,
        rgb=img.rgb[sl].copy(),
        lab=img.lab[sl].copy(),
        depth=img.depth[sl].copy(),
        gt=None if img.gt is None else img.gt[sl].copy(),
    )


def augment(img, rng, flip=True, translate=True, jitter=True, force_flip=None, gains=None):
    """Randomly mirror, crop and recolour one image.

    Mirroring happens with probability 0.5 (``force_flip`` overrides the
    draw). The crop keeps at least 90% of each dimension at a random
    offset. Each RGB channel is scaled by a gain drawn from [0.9, 1.1]
    (or ``gains``) before Lab conversion. Depth and ground truth follow the
    geometric transforms.
    """
    out = img
    do_flip = bool(rng.random() < 0.5) if force_flip is None else force_flip
    if flip and do_flip:
        out = hflip(out)
    if translate:
        h, w = out.height, out.width
        ch = int(rng.integers(math.ceil(CROP_KEEP * h), h + 1))
        cw = int(rng.integers(math.ceil(CROP_KEEP * w), w + 1))
        top = int(rng.integers(0, h - ch + 1))
        left = int(rng.integers(0, w - cw + 1))
        if (ch, cw) != (h, w):
            out = crop(out, top, left, ch, cw)
    if jitter:
        g = rng.uniform(1.0 - JITTER, 1.0 + JITTER, size=3) if gains is None else np.asarray(gains, dtype=np.float64)
        if not np.all(g == 1.0):
            out = out.with_rgb(out.rgb * g)
    return out
