"""Per-superpixel saliency cue vectors and their packing into 32x32x6 patches.

For region i every cue is recorded as a whole vector over the other regions
rather than reduced to a single score:

* local / global colour contrast (``cl``, ``cg``) and depth contrast
  (``dl``, ``dg``): ``t(j) * exp(-|x_i - x_j|^2 / 2 sigma^2) * dist(i, j)``
* colour compactness (``cs``): ``exp(-|c_i - c_j|^2 / 2 delta_c^2) * |x_j - u_i|``
  where ``u_i`` is the colour-similarity weighted mean position
* colour / depth contrast to the pseudo-background border regions (``cb``, ``db``)
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ShapeError
from .superpixel import boundary_regions, region_stats

N_REGIONS = 1024
N_BACKGROUND = 160
SIGMA_LOCAL = 0.15
SIGMA_GLOBAL = 0.45
DELTA_COLOR = 20.0
PATCH_SIDE = 32
PATCH_CHANNELS = 6

CHANNEL_NAMES = ("cl", "cg", "dl", "dg", "cs")


@dataclass
class FeatureSet:
    """The seven cue vectors, one row per region (or 1-D for a single region).

    ``cl, cg, dl, dg, cs`` have ``n`` columns (zero padded past the real
    region count); ``cb, db`` have ``n_b`` columns.
    """

    cl: np.ndarray
    cg: np.ndarray
    dl: np.ndarray
    dg: np.ndarray
    cs: np.ndarray
    cb: np.ndarray
    db: np.ndarray

    def row(self, i):
        return FeatureSet(*(getattr(self, f)[i] for f in ("cl", "cg", "dl", "dg", "cs", "cb", "db")))


@dataclass
class FeaturePatch:
    data: np.ndarray  # (32, 32, 6)
    region: int
    label: Optional[int] = None  # 1 salient, 0 non-salient


def _spatial_weight(stats, sigma):
    d2 = cdist(stats.centroid, stats.centroid, "sqeuclidean")
    return np.exp(-d2 / (2.0 * sigma**2))


def _distance(stats, channel):
    if channel == "color":
        return cdist(stats.mean_lab, stats.mean_lab)
    if channel == "depth":
        d = stats.mean_depth
        return np.abs(d[:, None] - d[None, :])
    raise ValueError(f"unknown channel {channel!r}")


def _pad(mat, n):
    if mat.shape[-1] > n:
        raise ShapeError(f"{mat.shape[-1]} regions do not fit a vector of length {n}")
    if mat.shape[-1] == n:
        return mat
    width = [(0, 0)] * (mat.ndim - 1) + [(0, n - mat.shape[-1])]
    return np.pad(mat, width)


def contrast_matrix(stats, channel, scope, sigma_local=SIGMA_LOCAL, sigma_global=SIGMA_GLOBAL):
    """Row i is region i's contrast vector (unpadded, length n_actual)."""
    sigma = {"local": sigma_local, "global": sigma_global}[scope]
    return stats.weight[None, :] * _spatial_weight(stats, sigma) * _distance(stats, channel)


def contrast_vector(i, stats, channel, scope, n=N_REGIONS, **sigmas):
    if not 0 <= i < stats.n:
        raise IndexError(f"region {i} out of range [0, {stats.n})")
    return _pad(contrast_matrix(stats, channel, scope, **sigmas)[i], n)


def compactness_matrix(stats, delta_c=DELTA_COLOR, color_dist=None):
    if color_dist is None:
        color_dist = _distance(stats, "color")
    sim = np.exp(-(color_dist**2) / (2.0 * delta_c**2))
    x = stats.centroid
    u = (sim @ x) / sim.sum(axis=1, keepdims=True)
    return sim * cdist(u, x)


def compactness_vector(i, stats, n=N_REGIONS, delta_c=DELTA_COLOR):
    if not 0 <= i < stats.n:
        raise IndexError(f"region {i} out of range [0, {stats.n})")
    return _pad(compactness_matrix(stats, delta_c)[i], n)


def background_matrix(stats, bg, channel, n_b=N_BACKGROUND, sigma_global=SIGMA_GLOBAL):
    """Contrast of every region to the pseudo-background list ``bg`` (padded to ``n_b``)."""
    bg = np.asarray(bg, dtype=np.int64)[:n_b]
    full = contrast_matrix(stats, channel, "global", sigma_global=sigma_global)
    return _pad(full[:, bg], n_b)


def background_vector(i, stats, bg, channel, n_b=N_BACKGROUND, sigma_global=SIGMA_GLOBAL):
    if not 0 <= i < stats.n:
        raise IndexError(f"region {i} out of range [0, {stats.n})")
    return background_matrix(stats, bg, channel, n_b, sigma_global)[i]


def compute_features(
    stats,
    bg,
    n=N_REGIONS,
    n_b=N_BACKGROUND,
    sigma_local=SIGMA_LOCAL,
    sigma_global=SIGMA_GLOBAL,
    delta_c=DELTA_COLOR,
    rows=None,
):
    """All seven cue vectors for every region (or only ``rows``) at once."""
    bg = np.asarray(bg, dtype=np.int64)[:n_b]
    rows = np.arange(stats.n) if rows is None else np.asarray(rows, dtype=np.int64)
    d2 = cdist(stats.centroid[rows], stats.centroid, "sqeuclidean")
    t = stats.weight[None, :]
    wl = t * np.exp(-d2 / (2.0 * sigma_local**2))
    wg = t * np.exp(-d2 / (2.0 * sigma_global**2))
    dc = cdist(stats.mean_lab[rows], stats.mean_lab)
    dd = np.abs(stats.mean_depth[rows, None] - stats.mean_depth[None, :])
    sim = np.exp(-(cdist(stats.mean_lab, stats.mean_lab) ** 2) / (2.0 * delta_c**2))[rows]
    x = stats.centroid
    u = (sim @ x) / sim.sum(axis=1, keepdims=True)
    cg, dg = wg * dc, wg * dd
    return FeatureSet(
        cl=_pad(wl * dc, n),
        cg=_pad(cg, n),
        dl=_pad(wl * dd, n),
        dg=_pad(dg, n),
        cs=_pad(sim * cdist(u, x), n),
        cb=_pad(cg[:, bg], n_b),
        db=_pad(dg[:, bg], n_b),
    )


def _minmax_channels(x):
    """Scale every channel of ``(..., 32, 32, C)`` to [0, 1] in place (constant -> 0)."""
    flat = x.reshape(-1, x.shape[-3] * x.shape[-2], x.shape[-1])
    lo = flat.min(axis=1, keepdims=True)
    span = flat.max(axis=1, keepdims=True) - lo
    flat -= lo
    flat *= np.divide(1.0, span, out=np.zeros_like(span), where=span > 0)
    return x


def pack_patches(fs, scale=True):
    """Pack a (possibly batched) FeatureSet into ``(..., 32, 32, 6)`` arrays.

    The five region-length vectors are reshaped row-major into channels
    0-4. The two background vectors are each zero padded to half the patch
    area, concatenated and reshaped into channel 5. With ``scale`` every
    channel is min-max scaled to [0, 1] on its own (constant channel -> 0).
    """
    side2 = PATCH_SIDE * PATCH_SIDE
    half = side2 // 2
    for name in CHANNEL_NAMES:
        if getattr(fs, name).shape[-1] != side2:
            raise ShapeError(f"{name} has length {getattr(fs, name).shape[-1]}, expected {side2}")
    for name in ("cb", "db"):
        if getattr(fs, name).shape[-1] > half:
            raise ShapeError(f"{name} has length {getattr(fs, name).shape[-1]}, at most {half} allowed")
    lead = fs.cl.shape[:-1]
    out = np.zeros((*lead, side2, PATCH_CHANNELS), dtype=np.float64)
    for k, name in enumerate(CHANNEL_NAMES):
        out[..., k] = getattr(fs, name)
    out[..., : fs.cb.shape[-1], 5] = fs.cb
    out[..., half : half + fs.db.shape[-1], 5] = fs.db
    out = out.reshape(*lead, PATCH_SIDE, PATCH_SIDE, PATCH_CHANNELS)
    return _minmax_channels(out) if scale else out


def pack_patch(fs, region=0, label=None, scale=True):
    return FeaturePatch(data=pack_patches(fs, scale=scale), region=region, label=label)


def unpack_patch(patch, n_b=N_BACKGROUND):
    """Inverse of :func:`pack_patches` (without scaling) for one patch."""
    data = patch.data if isinstance(patch, FeaturePatch) else np.asarray(patch)
    if data.shape != (PATCH_SIDE, PATCH_SIDE, PATCH_CHANNELS):
        raise ShapeError(f"patch shape {data.shape}")
    flat = data.reshape(-1, PATCH_CHANNELS)
    half = flat.shape[0] // 2
    return FeatureSet(
        *(flat[:, k].copy() for k in range(5)),
        cb=flat[:n_b, 5].copy(),
        db=flat[half : half + n_b, 5].copy(),
    )


def region_labels(seg, gt):
    """1 where more than half of a region's pixels are ground-truth salient."""
    frac = np.bincount(seg.labels.ravel(), weights=gt.ravel().astype(np.float64), minlength=seg.n_actual)
    return (frac / seg.counts() > 0.5).astype(np.int64)


def extract_arrays(img, seg, stats=None, params=None, rows=None):
    """Scaled patches ``(n_actual, 32, 32, 6)`` and labels (or None without gt).

    ``rows`` restricts packing to a subset of regions; labels still cover all.
    """
    params = params or {}
    if stats is None:
        stats = region_stats(seg, img)
    n_b = params.get("n_b", N_BACKGROUND)
    bg = boundary_regions(seg, n_b)
    fs = compute_features(
        stats,
        bg,
        n=PATCH_SIDE * PATCH_SIDE,
        n_b=n_b,
        sigma_local=params.get("sigma_local", SIGMA_LOCAL),
        sigma_global=params.get("sigma_global", SIGMA_GLOBAL),
        delta_c=params.get("delta_c", DELTA_COLOR),
        rows=rows,
    )
    patches = pack_patches(fs)
    labels = region_labels(seg, img.gt) if img.gt is not None else None
    return patches, labels


def extract_all(img, seg, stats=None, params=None):
    """One :class:`FeaturePatch` per region, labelled when ``img.gt`` is present."""
    patches, labels = extract_arrays(img, seg, stats, params)
    return [
        FeaturePatch(data=patches[i], region=i, label=None if labels is None else int(labels[i]))
        for i in range(len(patches))
    ]


_RECORD = struct.Struct("<I")


def write_feature_dump(patches, path):
    """Binary dump: per patch a u32 region id, 6144 float32 values, one label byte."""
    with open(path, "wb") as fh:
        for p in patches:
            fh.write(_RECORD.pack(p.region))
            fh.write(np.asarray(p.data, dtype="<f4").tobytes(order="C"))
            fh.write(bytes([255 if p.label is None else int(p.label)]))


def read_feature_dump(path):
    size = PATCH_SIDE * PATCH_SIDE * PATCH_CHANNELS
    rec = 4 + 4 * size + 1
    raw = open(path, "rb").read()
    if len(raw) % rec:
        raise ShapeError(f"{path}: length {len(raw)} is not a multiple of {rec}")
    out = []
    for off in range(0, len(raw), rec):
        (region,) = _RECORD.unpack_from(raw, off)
        data = np.frombuffer(raw, dtype="<f4", count=size, offset=off + 4).reshape(PATCH_SIDE, PATCH_SIDE, PATCH_CHANNELS)
        lab = raw[off + rec - 1]
        out.append(FeaturePatch(data=data.astype(np.float64), region=region, label=None if lab == 255 else lab))
    return out
