"""Precision-recall curves and F-measure for saliency maps."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import AlignmentError

BETA2 = 0.3
THRESHOLDS = np.arange(256) / 255.0


@dataclass
class PrCurve:
    thresholds: np.ndarray
    precision: np.ndarray
    recall: np.ndarray

    def rows(self):
        return zip(self.thresholds, self.precision, self.recall)


def _pairs(maps, gts):
    maps, gts = list(maps), list(gts)
    if len(maps) != len(gts):
        raise AlignmentError(f"{len(maps)} maps but {len(gts)} ground-truth masks")
    out = []
    for k, (m, g) in enumerate(zip(maps, gts)):
        m = np.asarray(getattr(m, "pixels", m), dtype=np.float64)
        g = np.asarray(g) > 0
        if m.shape != g.shape:
            raise AlignmentError(f"pair {k}: map {m.shape} vs mask {g.shape}")
        out.append((m, g))
    return out


def _precision_recall(tp, n_pred, n_gt):
    """Vectorized precision / recall with the empty-set conventions.

    An empty prediction has precision 1 when the mask is empty too, else 0;
    an empty mask has recall 1.
    """
    tp = np.asarray(tp, dtype=np.float64)
    n_pred = np.asarray(n_pred, dtype=np.float64)
    empty_pred = 1.0 if n_gt == 0 else 0.0
    precision = np.divide(tp, n_pred, out=np.full_like(tp, empty_pred), where=n_pred > 0)
    recall = tp / n_gt if n_gt > 0 else np.ones_like(tp)
    return precision, recall


def pr_curve(maps, gts, thresholds=THRESHOLDS):
    """Mean precision and recall over images at each threshold (``map >= t`` is salient)."""
    pairs = _pairs(maps, gts)
    prec = np.zeros(len(thresholds))
    rec = np.zeros(len(thresholds))
    for m, g in pairs:
        all_sorted = np.sort(m.ravel())
        pos_sorted = np.sort(m[g])
        n_pred = all_sorted.size - np.searchsorted(all_sorted, thresholds, side="left")
        tp = pos_sorted.size - np.searchsorted(pos_sorted, thresholds, side="left")
        p, r = _precision_recall(tp, n_pred, int(g.sum()))
        prec += p
        rec += r
    n = max(len(pairs), 1)
    return PrCurve(np.asarray(thresholds, dtype=np.float64), prec / n, rec / n)


def f_beta(precision, recall, beta2=BETA2):
    """``(1 + b2) P R / (b2 P + R)``, defined as 0 when the denominator vanishes."""
    den = beta2 * precision + recall
    if den == 0:
        return 0.0
    return (1.0 + beta2) * precision * recall / den


@dataclass
class FScores:
    f_measure: float
    precision: float
    recall: float
    per_image: np.ndarray  # (n, 3): precision, recall, F


def adaptive_scores(maps, gts, beta2=BETA2):
    """Per-image scores at the adaptive threshold ``min(2 * mean(map), 1)``."""
    rows = []
    for m, g in _pairs(maps, gts):
        thr = min(2.0 * m.mean(), 1.0)
        pred = m >= thr
        tp = int((pred & g).sum())
        p, r = _precision_recall(np.array([tp]), np.array([pred.sum()]), int(g.sum()))
        rows.append((p[0], r[0], f_beta(p[0], r[0], beta2)))
    per = np.array(rows, dtype=np.float64).reshape(-1, 3)
    mean = per.mean(axis=0) if len(per) else np.zeros(3)
    return FScores(f_measure=float(mean[2]), precision=float(mean[0]), recall=float(mean[1]), per_image=per)


def f_measure(maps, gts, beta2=BETA2):
    """Mean adaptive-threshold F-measure over images."""
    return adaptive_scores(maps, gts, beta2).f_measure


def write_curve_csv(curve, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["threshold", "precision", "recall"])
        for t, p, r in curve.rows():
            wr.writerow([f"{t:.6f}", f"{p:.6f}", f"{r:.6f}"])


def write_summary_csv(path, dataset, n_images, scores):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["dataset", "n_images", "f_measure", "mean_precision", "mean_recall"])
        wr.writerow([dataset, n_images, f"{scores.f_measure:.6f}", f"{scores.precision:.6f}", f"{scores.recall:.6f}"])
