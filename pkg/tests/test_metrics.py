import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_array_equal

from oracles import curve_oracle
from rsdf import metrics as M
from rsdf.errors import AlignmentError


def test_f_beta_values():
    assert M.f_beta(1.0, 1.0) == 1.0
    assert M.f_beta(0.8, 0.6) == pytest.approx(0.74286, abs=1e-5)
    assert M.f_beta(0.0, 0.0) == 0.0


def test_curve_matches_counting_oracle():
    rng = np.random.default_rng(2)
    maps = [np.round(rng.uniform(0, 1, (8, 8)) * 255) / 255 for _ in range(3)]
    gts = [rng.uniform(0, 1, (8, 8)) > 0.6 for _ in range(3)]
    gts[2][:] = False
    curve = M.pr_curve(maps, gts)
    p, r = curve_oracle(maps, gts)
    assert_array_equal(curve.precision, p)
    assert_array_equal(curve.recall, r)


def test_perfect_and_inverted_maps():
    rng = np.random.default_rng(3)
    gt = rng.uniform(0, 1, (10, 10)) > 0.5
    c = M.pr_curve([gt.astype(float)], [gt])
    assert (c.precision[1:] == 1).all() and (c.recall[1:] == 1).all()
    c = M.pr_curve([1.0 - gt], [gt])
    assert not c.precision[1:].any()
    assert M.f_measure([gt.astype(float)], [gt]) == 1.0
    assert M.f_measure([1.0 - gt], [gt]) == 0.0


def test_curve_shape_and_monotone_recall():
    rng = np.random.default_rng(4)
    c = M.pr_curve([rng.uniform(0, 1, (16, 16))], [rng.uniform(0, 1, (16, 16)) > 0.7])
    assert len(list(c.rows())) == 256
    assert c.thresholds[0] == 0 and c.thresholds[-1] == 1
    assert (np.diff(c.recall) <= 0).all()
    assert ((c.precision >= 0) & (c.precision <= 1)).all()


def test_pixel_permutation_invariance():
    rng = np.random.default_rng(5)
    m, g = rng.uniform(0, 1, (12, 12)), rng.uniform(0, 1, (12, 12)) > 0.6
    perm = rng.permutation(144)
    a = M.pr_curve([m], [g])
    b = M.pr_curve([m.ravel()[perm].reshape(12, 12)], [g.ravel()[perm].reshape(12, 12)])
    assert_array_equal(a.precision, b.precision)
    assert_array_equal(a.recall, b.recall)


@settings(max_examples=60, deadline=None)
@given(p=st.floats(0, 1), r=st.floats(0, 1), dp=st.floats(0, 1))
def test_f_beta_zero_iff_product_zero_and_monotone(p, r, dp):
    f = M.f_beta(p, r)
    assert (f == 0) == (p * r == 0)
    assert M.f_beta(min(p + dp, 1.0), r) >= f - 1e-12
    assert M.f_beta(p, min(r + dp, 1.0)) >= f - 1e-12


def test_adaptive_threshold_rule():
    m = np.array([[0.0, 0.1, 0.3, 0.6]])
    g = np.array([[0, 0, 1, 1]], dtype=bool)
    # mean 0.25 -> threshold 0.5 keeps only the last pixel
    s = M.adaptive_scores([m], [g])
    assert s.precision == 1.0 and s.recall == 0.5
    assert s.f_measure == pytest.approx(M.f_beta(1.0, 0.5))


def test_alignment_errors():
    with pytest.raises(AlignmentError):
        M.pr_curve([np.zeros((4, 4))], [np.zeros((4, 5), bool)])
    with pytest.raises(AlignmentError):
        M.f_measure([np.zeros((4, 4))] * 2, [np.zeros((4, 4), bool)])


def test_csv_outputs(tmp_path):
    g = np.eye(4, dtype=bool)
    M.write_curve_csv(M.pr_curve([g.astype(float)], [g]), tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "threshold,precision,recall" and len(lines) == 257
    M.write_summary_csv(tmp_path / "s.csv", "toy", 1, M.adaptive_scores([g.astype(float)], [g]))
    assert (tmp_path / "s.csv").read_text().splitlines()[1] == "toy,1,1.000000,1.000000,1.000000"
