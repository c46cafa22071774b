"""RGBD image loading, colour conversion and saliency-map PNG I/O."""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .errors import AlignmentError, FormatError

# sRGB primaries, D65 white
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
# White point taken from the matrix row sums so that greys land on a = b = 0 exactly.
_WHITE = _RGB_TO_XYZ.sum(axis=1)
_DELTA = 6.0 / 29.0


def _srgb_linearize(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _lab_f(t):
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3 * _DELTA**2) + 4.0 / 29.0)


def rgb_to_lab(rgb):
    """Convert an ``(..., 3)`` array of sRGB values in [0, 1] to CIELAB (D65).

    >>> np.round(rgb_to_lab(np.array([1.0, 1.0, 1.0])), 6)
    array([100.,   0.,   0.])
    """
    rgb = np.asarray(rgb, dtype=np.float64)
    lin = _srgb_linearize(rgb)
    xyz = lin @ _RGB_TO_XYZ.T
    f = _lab_f(xyz / _WHITE)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def srgb_to_lab(r, g, b):
    """Convert one 8-bit sRGB triple to an ``(L, a, b)`` tuple."""
    lab = rgb_to_lab(np.array([r, g, b], dtype=np.float64) / 255.0)
    return float(lab[0]), float(lab[1]), float(lab[2])


def normalize_depth(depth):
    """Min-max scale a depth map to [0, 1]; a constant map becomes all zeros."""
    depth = np.asarray(depth, dtype=np.float64)
    lo, hi = depth.min(), depth.max()
    if hi <= lo:
        return np.zeros_like(depth)
    return (depth - lo) / (hi - lo)


@dataclass(frozen=True)
class RgbdImage:
    """Aligned colour, depth and optional ground truth for one scene.

    ``rgb`` is kept next to ``lab`` so that photometric augmentation can be
    applied before the colour conversion.
    """

    rgb: np.ndarray  # (H, W, 3) float64 in [0, 1]
    lab: np.ndarray  # (H, W, 3) float64
    depth: np.ndarray  # (H, W) float64 in [0, 1]
    gt: Optional[np.ndarray] = None  # (H, W) uint8 in {0, 1}
    name: str = ""

    def __post_init__(self):
        h, w = self.depth.shape
        if self.rgb.shape != (h, w, 3) or self.lab.shape != (h, w, 3):
            raise AlignmentError(f"colour {self.rgb.shape} and depth {self.depth.shape} disagree")
        if self.gt is not None and self.gt.shape != (h, w):
            raise AlignmentError(f"ground truth {self.gt.shape} and depth {self.depth.shape} disagree")

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @classmethod
    def from_arrays(cls, rgb, depth, gt=None, *, normalize=True, name=""):
        """Build an image from raw arrays.

        ``rgb`` may be uint8 or float in [0, 1]. ``depth`` is min-max
        normalized unless ``normalize`` is False. ``gt`` is binarized at half
        its maximum.
        """
        rgb = np.asarray(rgb)
        rgb = rgb.astype(np.float64) / 255.0 if rgb.dtype == np.uint8 else rgb.astype(np.float64)
        depth = np.asarray(depth, dtype=np.float64)
        if rgb.shape[:2] != depth.shape:
            raise AlignmentError(f"colour {rgb.shape[:2]} and depth {depth.shape} disagree")
        if normalize:
            depth = normalize_depth(depth)
        if gt is not None:
            gt = binarize_mask(gt)
        return cls(rgb=rgb, lab=rgb_to_lab(rgb), depth=depth, gt=gt, name=name)

    def with_rgb(self, rgb):
        """Return a copy with new colour values (Lab recomputed)."""
        rgb = np.clip(rgb, 0.0, 1.0)
        return replace(self, rgb=rgb, lab=rgb_to_lab(rgb))


def binarize_mask(mask):
    mask = np.asarray(mask, dtype=np.float64)
    peak = mask.max() if mask.size else 0.0
    return (mask > 0.5 * peak).astype(np.uint8)


def _open(path):
    try:
        img = Image.open(path)
        img.load()
    except (OSError, ValueError) as exc:
        raise FormatError(f"{path}: cannot read image ({exc})") from exc
    return img


def read_rgb(path) -> np.ndarray:
    img = _open(path)
    if img.mode != "RGB":
        raise FormatError(f"{path}: expected 8-bit RGB, got mode {img.mode}")
    return np.asarray(img, dtype=np.uint8)


def read_gray(path) -> np.ndarray:
    """Read an 8- or 16-bit single-channel PNG as float64 raw values."""
    img = _open(path)
    if img.mode in ("L", "1"):
        return np.asarray(img.convert("L"), dtype=np.float64)
    if img.mode.startswith("I;16") or img.mode == "I":
        arr = np.asarray(img).astype(np.float64)
        if arr.min() < 0 or arr.max() > 65535:
            raise FormatError(f"{path}: values outside 16-bit range")
        return arr
    raise FormatError(f"{path}: expected 8/16-bit grayscale, got mode {img.mode}")


def load_rgbd(rgb_path, depth_path, gt_path=None) -> RgbdImage:
    """Load an aligned RGB / depth (/ ground truth) triple from PNG files."""
    rgb = read_rgb(rgb_path)
    depth = read_gray(depth_path)
    if depth.shape != rgb.shape[:2]:
        raise AlignmentError(f"{depth_path}: size {depth.shape} != rgb size {rgb.shape[:2]}")
    gt = None
    if gt_path is not None:
        gt = read_gray(gt_path)
        if gt.shape != rgb.shape[:2]:
            raise AlignmentError(f"{gt_path}: size {gt.shape} != rgb size {rgb.shape[:2]}")
    return RgbdImage.from_arrays(rgb, depth, gt, name=Path(rgb_path).stem)


def saliency_to_uint8(smap) -> np.ndarray:
    return np.rint(np.clip(np.asarray(smap, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_saliency_png(smap, path) -> None:
    """Write a [0, 1] map as an 8-bit grayscale PNG with value round(255 s)."""
    Image.fromarray(saliency_to_uint8(smap)).save(path)


def read_saliency_png(path) -> np.ndarray:
    """Read a grayscale saliency PNG back into [0, 1] (16-bit maps are scaled by 65535)."""
    img = _open(path)
    if img.mode in ("L", "1"):
        return np.asarray(img.convert("L"), dtype=np.float64) / 255.0
    if img.mode.startswith("I;16") or img.mode == "I":
        return np.asarray(img).astype(np.float64) / 65535.0
    raise FormatError(f"{path}: expected grayscale saliency map, got mode {img.mode}")


def write_rgb_png(rgb, path) -> None:
    Image.fromarray(np.asarray(rgb, dtype=np.uint8)).save(path)


def write_gray16_png(values, path) -> None:
    arr = np.asarray(values)
    if arr.min() < 0 or arr.max() > 65535:
        raise FormatError("values do not fit a 16-bit PNG")
    Image.fromarray(arr.astype(np.uint16)).save(path)


def write_mask_png(mask, path) -> None:
    Image.fromarray((np.asarray(mask) > 0).astype(np.uint8) * 255).save(path)
