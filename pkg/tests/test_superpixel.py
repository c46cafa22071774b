import csv

import numpy as np
import pytest
from PIL import Image
from scipy import ndimage
from sklearn.cluster import KMeans

from rsdf.errors import DegenerateInputError
from rsdf.imageio import RgbdImage
from rsdf.superpixel import (
    Segmentation,
    adjacency,
    boundary_regions,
    region_stats,
    slic_segment,
    write_label_png,
    write_stats_csv,
)

from conftest import blob_image


def _uniform(h, w, value=128):
    return RgbdImage.from_arrays(np.full((h, w, 3), value, np.uint8), np.zeros((h, w)))


def assert_partition(seg):
    labels = seg.labels
    assert labels.min() == 0 and labels.max() == seg.n_actual - 1
    assert np.all(np.bincount(labels.ravel(), minlength=seg.n_actual) > 0)
    for k in range(seg.n_actual):
        _, ncomp = ndimage.label(labels == k)  # default structure is 4-connectivity
        assert ncomp == 1, f"region {k} has {ncomp} pieces"


def test_uniform_grey_gives_grid():
    seg = slic_segment(_uniform(64, 64), 16)
    assert seg.n_actual == 16
    assert_partition(seg)
    for k in range(16):
        ys, xs = np.nonzero(seg.labels == k)
        assert len(ys) == 256
        assert ys.max() - ys.min() == 15 and xs.max() - xs.min() == 15


def test_two_colour_halves_match_two_means():
    rgb = np.zeros((64, 64, 3), np.uint8)
    rgb[:, :32] = [20, 150, 40]
    rgb[:, 32:] = [200, 30, 30]
    img = RgbdImage.from_arrays(rgb, np.zeros((64, 64)))
    seg = slic_segment(img, 2)
    assert seg.n_actual == 2
    assert_partition(seg)
    # independent 2-means over (L, a, b, scaled x, scaled y)
    step = np.sqrt(64 * 64 / 2)
    yy, xx = np.mgrid[:64, :64]
    feats = np.column_stack([img.lab.reshape(-1, 3), (xx.ravel() / step) * 10, (yy.ravel() / step) * 10])
    km = KMeans(2, n_init=5, random_state=0).fit(feats).labels_.reshape(64, 64)
    for lab_map in (seg.labels, km):
        edges = [np.flatnonzero(np.diff(row) != 0) for row in lab_map]
        assert all(len(e) == 1 and abs(e[0] + 1 - 32) <= 2 for e in edges)


def test_saturation_one_region_per_pixel(rng):
    img = RgbdImage.from_arrays(rng.integers(0, 256, (32, 32, 3)).astype(np.uint8), rng.random((32, 32)))
    seg = slic_segment(img, 1024)
    assert seg.n_actual == 1024
    np.testing.assert_array_equal(seg.labels, np.arange(1024).reshape(32, 32))


def test_degenerate_input():
    with pytest.raises(DegenerateInputError):
        slic_segment(_uniform(8, 8), 100)
    with pytest.raises(DegenerateInputError):
        slic_segment(_uniform(8, 8), 4, compactness=0)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_region_count_and_partition(seed):
    rng = np.random.default_rng(seed)
    imgs = [
        blob_image(seed),
        RgbdImage.from_arrays(rng.integers(0, 256, (64, 64, 3)).astype(np.uint8), rng.random((64, 64))),
        RgbdImage.from_arrays(rng.integers(0, 256, (48, 80, 3)).astype(np.uint8), rng.random((48, 80))),
    ]
    for img in imgs:
        for n in (16, 100, 1024):
            seg = slic_segment(img, n)
            assert abs(seg.n_actual - n) <= 0.2 * n
            assert_partition(seg)


def test_deterministic(blob):
    a = slic_segment(blob, 256)
    b = slic_segment(blob, 256)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_stats_single_region():
    img = _uniform(6, 10)
    st = region_stats(Segmentation(np.zeros((6, 10), np.int64), 1), img)
    np.testing.assert_allclose(st.weight, [1.0])
    np.testing.assert_allclose(st.centroid, [[0.5, 0.5]])


def test_stats_two_halves():
    lab_left, lab_right = np.array([10.0, 0, 0]), np.array([50.0, 0, 0])
    lab = np.zeros((4, 8, 3))
    lab[:, :4], lab[:, 4:] = lab_left, lab_right
    img = RgbdImage(rgb=np.zeros((4, 8, 3)), lab=lab, depth=np.zeros((4, 8)))
    labels = np.zeros((4, 8), np.int64)
    labels[:, 4:] = 1
    st = region_stats(Segmentation(labels, 2), img)
    np.testing.assert_array_equal(st.mean_lab, [lab_left, lab_right])
    np.testing.assert_array_equal(st.weight, [0.5, 0.5])


def test_stats_against_double_loop(rng):
    for _ in range(20):
        h, w = 8, 8
        img = RgbdImage.from_arrays(rng.integers(0, 256, (h, w, 3)).astype(np.uint8), rng.random((h, w)))
        labels = rng.permutation(np.arange(h * w) % 4).reshape(h, w)
        st = region_stats(Segmentation(labels, 4), img)
        for k in range(4):
            acc, dep, cx, cy, n = np.zeros(3), 0.0, 0.0, 0.0, 0
            for y in range(h):
                for x in range(w):
                    if labels[y, x] == k:
                        acc += img.lab[y, x]
                        dep += img.depth[y, x]
                        cx += (x + 0.5) / w
                        cy += (y + 0.5) / h
                        n += 1
            np.testing.assert_allclose(st.mean_lab[k], acc / n, rtol=1e-12, atol=1e-12)
            assert st.mean_depth[k] == pytest.approx(dep / n, abs=1e-12)
            np.testing.assert_allclose(st.centroid[k], [cx / n, cy / n], atol=1e-12)
            assert st.weight[k] == pytest.approx(n / (h * w), abs=1e-15)
        assert abs(st.weight.sum() - 1.0) < 1e-9
        assert np.all((st.centroid >= 0) & (st.centroid <= 1))


def test_stats_label_permutation_equivariance(blob, rng):
    seg = slic_segment(blob, 64)
    perm = rng.permutation(seg.n_actual)
    st = region_stats(seg, blob)
    st2 = region_stats(Segmentation(perm[seg.labels], seg.n_actual), blob)
    for field in ("mean_lab", "mean_depth", "centroid", "weight"):
        np.testing.assert_allclose(getattr(st2, field)[perm], getattr(st, field), atol=1e-12)


def test_adjacency_simple():
    labels = np.zeros((4, 4), np.int64)
    labels[:, 2:] = 1
    assert adjacency(Segmentation(labels, 2)) == [{1}, {0}]
    strip = np.array([[0, 1, 2]])
    assert adjacency(Segmentation(strip, 3)) == [{1}, {0, 2}, {1}]


def test_adjacency_against_pixel_scan(rng):
    for _ in range(10):
        labels = rng.integers(0, 6, (7, 9))
        labels[0, :6] = np.arange(6)
        nb = adjacency(Segmentation(labels, 6))
        ref = [set() for _ in range(6)]
        h, w = labels.shape
        for y in range(h):
            for x in range(w):
                for dy, dx in ((0, 1), (1, 0), (0, -1), (-1, 0)):
                    yy, xx = y + dy, x + dx
                    if 0 <= yy < h and 0 <= xx < w and labels[yy, xx] != labels[y, x]:
                        ref[labels[y, x]].add(int(labels[yy, xx]))
        assert nb == ref
        for i, s in enumerate(nb):
            assert i not in s
            assert all(i in nb[j] for j in s)


def test_boundary_grid():
    labels = np.repeat(np.repeat(np.arange(16).reshape(4, 4), 3, axis=0), 3, axis=1)
    bg = boundary_regions(Segmentation(labels, 16), 160)
    # clockwise from the top-left
    np.testing.assert_array_equal(bg, [0, 1, 2, 3, 7, 11, 15, 14, 13, 12, 8, 4])


def test_boundary_single_region():
    np.testing.assert_array_equal(boundary_regions(Segmentation(np.zeros((5, 5), np.int64), 1), 160), [0])


def test_boundary_truncation_keeps_longest_contact():
    labels = np.zeros((10, 10), np.int64)
    labels[0, 1] = 1  # one border pixel
    labels[:, 9] = 2  # a whole column
    labels[9, 0:3] = 3
    bg = boundary_regions(Segmentation(labels, 4), 2)
    np.testing.assert_array_equal(bg, [0, 2])


def test_boundary_on_slic(blob):
    seg = slic_segment(blob, 1024)
    bg = boundary_regions(seg, 160)
    assert len(bg) <= 160
    border = set(np.r_[seg.labels[0], seg.labels[-1], seg.labels[:, 0], seg.labels[:, -1]].tolist())
    assert set(bg.tolist()) == border  # 64x64 at 1024 regions has fewer than 160 border regions


def test_debug_outputs(tmp_path, blob):
    seg = slic_segment(blob, 64)
    write_label_png(seg, tmp_path / "labels.png")
    back = np.asarray(Image.open(tmp_path / "labels.png"))
    np.testing.assert_array_equal(back, seg.labels)
    st = region_stats(seg, blob)
    write_stats_csv(st, tmp_path / "stats.csv")
    rows = list(csv.DictReader(open(tmp_path / "stats.csv")))
    assert len(rows) == seg.n_actual
    assert float(rows[3]["weight"]) == pytest.approx(st.weight[3])
