"""SLIC superpixels and the per-region statistics the saliency cues are built on."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .errors import AlignmentError, DegenerateInputError
from .imageio import write_gray16_png

log = logging.getLogger(__name__)

DEFAULT_COMPACTNESS = 10.0
DEFAULT_ITERATIONS = 10


@dataclass(frozen=True)
class Segmentation:
    labels: np.ndarray  # (H, W) int64 in [0, n_actual)
    n_actual: int

    @property
    def shape(self):
        return self.labels.shape

    def counts(self):
        return np.bincount(self.labels.ravel(), minlength=self.n_actual)


@dataclass(frozen=True)
class RegionStats:
    mean_lab: np.ndarray  # (n, 3)
    mean_depth: np.ndarray  # (n,)
    centroid: np.ndarray  # (n, 2) as (x, y), each in [0, 1]
    weight: np.ndarray  # (n,) pixel fraction, sums to 1
    count: np.ndarray  # (n,) pixel counts

    @property
    def n(self) -> int:
        return len(self.weight)


def grid_shape(height, width, n_target):
    """Seed grid ``(rows, cols)`` with ``rows * cols <= n_target``.

    Among grids whose cells are at most 2:1, the one with the most seeds
    wins, then the squarest cells, then more columns.
    """
    best, fallback = None, None
    for nx in range(1, min(n_target, width) + 1):
        ny = min(n_target // nx, height)
        if ny < 1:
            break
        aspect = abs(math.log((width / nx) / (height / ny)))
        key = (n_target - nx * ny, aspect, -nx)
        if aspect <= math.log(2.0) + 1e-9 and (best is None or key < best[0]):
            best = (key, (ny, nx))
        if fallback is None or (aspect, -nx * ny) < fallback[0]:
            fallback = ((aspect, -nx * ny), (ny, nx))
    return (best or fallback)[1]


def _four_neighbour_pairs(labels):
    """Flat index pairs of all horizontally and vertically adjacent pixels."""
    h, w = labels.shape
    idx = np.arange(h * w).reshape(h, w)
    a = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    b = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    return a, b


def _components(labels):
    flat = labels.ravel()
    a, b = _four_neighbour_pairs(labels)
    same = flat[a] == flat[b]
    n = flat.size
    graph = sparse.coo_matrix((np.ones(same.sum(), dtype=np.int8), (a[same], b[same])), shape=(n, n))
    _, comp = connected_components(graph, directed=False)
    return comp


def enforce_connectivity(labels, max_passes=100):
    """Merge every fragment that is not the largest piece of its label.

    Each orphan fragment takes the label of the largest (by pixel count)
    region it touches among the fragments that are kept. Orphans touching
    only other orphans wait for a later pass. Label ids are unchanged apart
    from vanishing ones.
    """
    labels = labels.copy()
    h, w = labels.shape
    a, b = _four_neighbour_pairs(labels)
    for _ in range(max_passes):
        comp = _components(labels)
        flat = labels.ravel()
        ncomp = comp.max() + 1
        comp_label = np.empty(ncomp, dtype=np.int64)
        comp_label[comp] = flat
        comp_size = np.bincount(comp, minlength=ncomp)
        order = np.lexsort((np.arange(ncomp), -comp_size, comp_label))
        first = np.ones(ncomp, dtype=bool)
        first[1:] = comp_label[order[1:]] != comp_label[order[:-1]]
        keep = np.zeros(ncomp, dtype=bool)
        keep[order[first]] = True
        if keep.all():
            return labels

        label_size = np.bincount(flat)
        ca, cb = comp[a], comp[b]
        src = np.concatenate([ca, cb])
        dst = np.concatenate([cb, ca])
        sel = ~keep[src] & keep[dst]
        src, dst_label = src[sel], comp_label[dst[sel]]
        # per orphan: largest adjacent label, ties to the smaller label id
        order = np.lexsort((dst_label, -label_size[dst_label], src))
        src, dst_label = src[order], dst_label[order]
        head = np.ones(src.size, dtype=bool)
        head[1:] = src[1:] != src[:-1]
        remap = comp_label.copy()
        remap[src[head]] = dst_label[head]
        labels = remap[comp].reshape(h, w)
    raise RuntimeError("connectivity enforcement did not converge")


def compact_labels(labels):
    """Relabel to ``0..n-1`` keeping the relative order of the existing ids."""
    uniq, inv = np.unique(labels, return_inverse=True)
    return inv.reshape(labels.shape).astype(np.int64), len(uniq)


def slic_segment(img, n_target=1024, compactness=DEFAULT_COMPACTNESS, iterations=DEFAULT_ITERATIONS):
    """SLIC superpixels over (L, a, b, x, y).

    Seeds sit at the centres of a regular ``rows x cols`` grid (no gradient
    perturbation). Each pixel compares itself against the seeds of its own
    grid cell and the eight surrounding cells, with distance
    ``sqrt(dc^2 + (ds / S)^2 m^2)``. Region ids follow the raster order of
    the seed grid, so ``n_target = rows * cols`` squares map region j to grid
    cell j.
    """
    lab = img.lab if hasattr(img, "lab") else np.asarray(img, dtype=np.float64)
    h, w = lab.shape[:2]
    if n_target < 2:
        raise DegenerateInputError(f"n_target must be >= 2, got {n_target}")
    if compactness <= 0:
        raise DegenerateInputError("compactness must be positive")
    if n_target > h * w:
        raise DegenerateInputError(f"image {h}x{w} is smaller than the grid step for {n_target} superpixels")
    ny, nx = grid_shape(h, w, n_target)
    sy, sx = h / ny, w / nx
    step = math.sqrt(h * w / (ny * nx))
    spatial = (compactness / step) ** 2

    gy, gx = np.meshgrid(np.arange(ny), np.arange(nx), indexing="ij")
    cy = ((gy + 0.5) * sy - 0.5).ravel()
    cx = ((gx + 0.5) * sx - 0.5).ravel()
    iy = np.clip(np.floor(cy + 0.5).astype(int), 0, h - 1)
    ix = np.clip(np.floor(cx + 0.5).astype(int), 0, w - 1)
    ccol = lab[iy, ix].copy()
    n_seeds = ny * nx

    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    cell_r = np.minimum(((yy + 0.5) / sy).astype(int), ny - 1)
    cell_c = np.minimum(((xx + 0.5) / sx).astype(int), nx - 1)

    cand = []
    for dr in (-1, 0, 1):
        for dc in (-1, 0, 1):
            r, c = cell_r + dr, cell_c + dc
            ok = (r >= 0) & (r < ny) & (c >= 0) & (c < nx)
            cand.append(np.where(ok, r * nx + c, -1))
    cand = np.stack(cand)  # (9, H, W)
    valid = cand >= 0
    cand_safe = np.where(valid, cand, 0)

    flat_lab = lab.reshape(-1, 3)
    for _ in range(iterations):
        dcol = ((lab[None] - ccol[cand_safe]) ** 2).sum(-1)
        dsp = (yy[None] - cy[cand_safe]) ** 2 + (xx[None] - cx[cand_safe]) ** 2
        dist = np.where(valid, dcol + spatial * dsp, np.inf)
        pick = np.argmin(dist, axis=0)
        labels = np.take_along_axis(cand, pick[None], axis=0)[0]

        flat = labels.ravel()
        cnt = np.bincount(flat, minlength=n_seeds).astype(np.float64)
        live = cnt > 0
        for ch in range(3):
            s = np.bincount(flat, weights=flat_lab[:, ch], minlength=n_seeds)
            ccol[live, ch] = s[live] / cnt[live]
        cy[live] = np.bincount(flat, weights=yy.ravel(), minlength=n_seeds)[live] / cnt[live]
        cx[live] = np.bincount(flat, weights=xx.ravel(), minlength=n_seeds)[live] / cnt[live]

    labels = enforce_connectivity(labels)
    labels, n_actual = compact_labels(labels)
    if abs(n_actual - n_target) > 0.2 * n_target:
        log.info("slic: %d regions for target %d", n_actual, n_target)
    return Segmentation(labels=labels, n_actual=n_actual)


def region_stats(seg, img):
    """Per-region mean Lab, mean depth, normalized centroid and pixel-fraction weight."""
    labels = seg.labels
    if labels.shape != img.depth.shape:
        raise AlignmentError(f"segmentation {labels.shape} vs image {img.depth.shape}")
    h, w = labels.shape
    n = seg.n_actual
    flat = labels.ravel()
    count = np.bincount(flat, minlength=n).astype(np.float64)
    lab = img.lab.reshape(-1, 3)
    mean_lab = np.stack([np.bincount(flat, weights=lab[:, c], minlength=n) for c in range(3)], axis=1)
    mean_lab /= count[:, None]
    mean_depth = np.bincount(flat, weights=img.depth.ravel(), minlength=n) / count
    yy, xx = np.meshgrid((np.arange(h) + 0.5) / h, (np.arange(w) + 0.5) / w, indexing="ij")
    cx = np.bincount(flat, weights=xx.ravel(), minlength=n) / count
    cy = np.bincount(flat, weights=yy.ravel(), minlength=n) / count
    return RegionStats(
        mean_lab=mean_lab,
        mean_depth=mean_depth,
        centroid=np.stack([cx, cy], axis=1),
        weight=count / count.sum(),
        count=count.astype(np.int64),
    )


def adjacency_pairs(seg):
    """Sorted unique ``(i, j)`` pairs, ``i < j``, of 4-adjacent regions."""
    flat = seg.labels.ravel()
    a, b = _four_neighbour_pairs(seg.labels)
    la, lb = flat[a], flat[b]
    diff = la != lb
    lo = np.minimum(la[diff], lb[diff])
    hi = np.maximum(la[diff], lb[diff])
    if lo.size == 0:
        return np.empty((0, 2), dtype=np.int64)
    return np.unique(np.stack([lo, hi], axis=1), axis=0)


def adjacency(seg):
    """Neighbour set of every region (symmetric, no self loops)."""
    nbrs = [set() for _ in range(seg.n_actual)]
    for i, j in adjacency_pairs(seg):
        nbrs[i].add(int(j))
        nbrs[j].add(int(i))
    return nbrs


def border_sequence(labels):
    """Labels of the border pixels, clockwise from the top-left corner, each pixel once."""
    h, w = labels.shape
    if h == 1:
        return labels[0]
    if w == 1:
        return labels[:, 0]
    return np.concatenate([labels[0, :], labels[1:, -1], labels[-1, -2::-1], labels[-2:0:-1, 0]])


def boundary_regions(seg, n_b=160):
    """Regions touching the image border, in clockwise order of first contact.

    If more than ``n_b`` regions touch the border, the ``n_b`` with the
    longest border contact are kept (ties go to the earlier first contact).
    """
    if n_b < 1:
        raise ValueError("n_b must be >= 1")
    seq = border_sequence(seg.labels)
    uniq, first = np.unique(seq, return_index=True)
    contact = np.bincount(seq, minlength=seg.n_actual)[uniq]
    order = np.argsort(first, kind="stable")
    regions, first, contact = uniq[order], first[order], contact[order]
    if regions.size > n_b:
        log.debug("boundary: %d regions touch the border, keeping %d", regions.size, n_b)
        keep = np.lexsort((first, -contact))[:n_b]
        regions = regions[np.sort(keep)]
    return regions.astype(np.int64)


def write_label_png(seg, path):
    write_gray16_png(seg.labels, path)


def write_stats_csv(stats, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["index", "L", "a", "b", "depth", "cx", "cy", "weight"])
        for i in range(stats.n):
            wr.writerow([i, *stats.mean_lab[i], stats.mean_depth[i], *stats.centroid[i], stats.weight[i]])
