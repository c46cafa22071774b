"""Laplacian propagation of high-confidence saliency seeds over the superpixel graph.

Seeds come from Otsu thresholds on the per-region salient / non-salient
probabilities. The graph links regions that are adjacent or share a
neighbour, with Gaussian colour and depth affinities. The propagated
labelling solves ``(I - alpha S) F = Y`` with ``S = M^-1/2 A M^-1/2``.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.io import mmwrite

from .errors import AlignmentError, NumericalError
from .superpixel import adjacency_pairs, region_stats, slic_segment

log = logging.getLogger(__name__)

ALPHA = 0.99
DELTA_COLOR = 20.0
DELTA_DEPTH = 0.2
CG_TOL = 1e-8
CG_MAX_ITER = 1000


class DegenerateSaliencyWarning(UserWarning):
    """Seeds or scores carry no contrast; the output is all zeros."""


@dataclass
class PropagationProblem:
    affinity: sparse.csr_matrix  # symmetric, zero diagonal
    degree: np.ndarray  # row sums of the affinity
    seeds: np.ndarray  # (n, 2) indicator
    alpha: float = ALPHA

    @property
    def n(self):
        return self.affinity.shape[0]

    def normalized(self):
        """``S = M^-1/2 A M^-1/2`` (rows with zero degree stay zero)."""
        inv = np.zeros_like(self.degree)
        pos = self.degree > 0
        inv[pos] = 1.0 / np.sqrt(self.degree[pos])
        d = sparse.diags(inv)
        return (d @ self.affinity @ d).tocsr()

    def system(self):
        """The sparse system matrix ``I - alpha S``."""
        return (sparse.identity(self.n, format="csr") - self.alpha * self.normalized()).tocsr()


def two_hop_pairs(n, pairs):
    """Pairs ``(i, j)``, ``i != j``, at graph distance 1 or 2."""
    if len(pairs) == 0:
        return sparse.csr_matrix((n, n), dtype=bool)
    pairs = np.asarray(pairs)
    adj = sparse.coo_matrix(
        (np.ones(2 * len(pairs)), (np.r_[pairs[:, 0], pairs[:, 1]], np.r_[pairs[:, 1], pairs[:, 0]])),
        shape=(n, n),
    ).tocsr()
    adj.data[:] = 1.0
    reach = adj + adj @ adj
    reach.setdiag(0)
    reach.eliminate_zeros()
    reach.data[:] = 1.0
    return reach.tocsr()


def _connect_isolated(stats, pairs, n):
    """Link every region without neighbours to the region with the nearest centroid."""
    deg = np.zeros(n, dtype=np.int64)
    if len(pairs):
        np.add.at(deg, np.asarray(pairs).ravel(), 1)
    extra = []
    if n < 2:
        return pairs
    for i in np.flatnonzero(deg == 0):
        d = ((stats.centroid - stats.centroid[i]) ** 2).sum(1)
        d[i] = np.inf
        j = int(np.argmin(d))
        log.info("affinity: region %d is isolated, linking it to %d", i, j)
        extra.append((min(i, j), max(i, j)))
    if not extra:
        return pairs
    return np.unique(np.vstack([np.asarray(pairs).reshape(-1, 2), extra]), axis=0)


def build_affinity(stats, adj, delta1=DELTA_COLOR, delta2=DELTA_DEPTH):
    """Two-hop colour/depth affinity ``A`` (CSR) and degree vector ``m``.

    ``adj`` is either a list of neighbour sets or an ``(k, 2)`` pair array.
    """
    if delta1 <= 0 or delta2 <= 0:
        raise ValueError("affinity bandwidths must be positive")
    n = stats.n
    if isinstance(adj, (list, tuple)):
        pairs = np.array([(i, j) for i, nb in enumerate(adj) for j in nb if i < j], dtype=np.int64).reshape(-1, 2)
    else:
        pairs = np.asarray(adj, dtype=np.int64).reshape(-1, 2)
    pairs = _connect_isolated(stats, pairs, n)
    pattern = two_hop_pairs(n, pairs).tocoo()
    i, j = pattern.row, pattern.col
    dc2 = ((stats.mean_lab[i] - stats.mean_lab[j]) ** 2).sum(1)
    dd2 = (stats.mean_depth[i] - stats.mean_depth[j]) ** 2
    w = np.exp(-dc2 / (2.0 * delta1**2)) * np.exp(-dd2 / (2.0 * delta2**2))
    a = sparse.csr_matrix((w, (i, j)), shape=(n, n))
    a.sort_indices()
    return a, np.asarray(a.sum(axis=1)).ravel()


def _histogram(values, bins=256):
    idx = np.minimum(np.floor(np.asarray(values, dtype=np.float64) * bins), bins - 1).astype(np.int64)
    return np.bincount(np.maximum(idx, 0), minlength=bins)


def otsu_threshold(values, bins=256):
    """Otsu threshold of values in [0, 1] over a 256-bin histogram.

    Candidate thresholds are the bin edges ``k / 256``; class 0 holds the
    bins below the edge. The between-class variance is compared in exact
    integer arithmetic, so equal maxima resolve to the smallest edge. When
    no edge separates the data (all values in one bin) the largest value is
    returned, which leaves no value strictly above it.
    """
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size < 2:
        raise ValueError("otsu_threshold needs at least two values")
    hist = _histogram(values, bins)
    n0 = np.cumsum(hist)
    s0 = np.cumsum(hist * np.arange(bins))
    n, s = int(n0[-1]), int(s0[-1])
    best_num, best_den, best_k = 0, 1, None
    # edge k splits bins [0, k) | [k, bins)
    for k in range(1, bins):
        a, sa = int(n0[k - 1]), int(s0[k - 1])
        b = n - a
        if a == 0 or b == 0:
            continue
        # n^2 * between-class variance = (n * sa - a * s)^2 / (a * b)
        num = (n * sa - a * s) ** 2
        den = a * b
        if num * best_den > best_num * den:
            best_num, best_den, best_k = num, den, k
    if best_k is None:
        warnings.warn("otsu: input has no contrast", DegenerateSaliencyWarning, stacklevel=2)
        return float(values.max())
    return best_k / bins


def seed_labels(p_sal, p_nonsal):
    """Seed indicator ``Y`` (n, 2) from Otsu thresholds on both probability maps.

    A region above both thresholds takes the class with the larger margin.
    """
    p_sal = np.asarray(p_sal, dtype=np.float64)
    p_nonsal = np.asarray(p_nonsal, dtype=np.float64)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        t1 = otsu_threshold(p_sal)
        t2 = otsu_threshold(p_nonsal)
    m1, m2 = p_sal - t1, p_nonsal - t2
    sal = (m1 > 0) & ~((m2 > 0) & (m2 > m1))
    non = (m2 > 0) & ~sal
    y = np.zeros((len(p_sal), 2))
    y[sal, 0] = 1.0
    y[non, 1] = 1.0
    if caught or not y.any():
        warnings.warn("seeding is degenerate: %d salient, %d non-salient seeds" % (sal.sum(), non.sum()),
                      DegenerateSaliencyWarning, stacklevel=2)
    return y


def pcg(a, b, precond=None, tol=CG_TOL, max_iter=CG_MAX_ITER, x0=None):
    """Preconditioned conjugate gradient for a symmetric positive definite ``a``.

    ``precond`` is the diagonal of the (Jacobi) preconditioner, i.e. the
    iteration applies ``z = r / precond``. Stops when ``|r| <= tol |b|``.
    Returns ``(x, iterations, relative residual)``.
    """
    b = np.asarray(b, dtype=np.float64)
    nb = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    if nb == 0.0:
        return np.zeros_like(b), 0, 0.0
    inv = np.ones_like(b) if precond is None else 1.0 / np.asarray(precond, dtype=np.float64)
    r = b - a @ x
    z = inv * r
    p = z.copy()
    rz = r @ z
    res = np.linalg.norm(r) / nb
    k = 0
    while res > tol and k < max_iter:
        ap = a @ p
        step = rz / (p @ ap)
        x += step * p
        r -= step * ap
        res = np.linalg.norm(r) / nb
        k += 1
        if res <= tol:
            break
        z = inv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    if res > tol:
        raise NumericalError(f"conjugate gradient stopped at {k} iterations, residual {res:.3e}", residual=res)
    return x, k, res


def solve_propagation(problem, tol=CG_TOL, max_iter=CG_MAX_ITER):
    """Solve ``(I - alpha S) F = Y`` column by column with Jacobi-preconditioned CG."""
    if not 0.0 < problem.alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    system = problem.system()
    diag = system.diagonal()
    f = np.zeros_like(problem.seeds, dtype=np.float64)
    for col in range(problem.seeds.shape[1]):
        f[:, col], it, res = pcg(system, problem.seeds[:, col], precond=diag, tol=tol, max_iter=max_iter)
        log.debug("propagation column %d: %d iterations, residual %.2e", col, it, res)
    return f


def normalize_scores(r):
    """Min-max normalize to [0, 1]; a constant input becomes zeros with a warning."""
    r = np.asarray(r, dtype=np.float64)
    lo, hi = r.min(), r.max()
    if not hi > lo:
        warnings.warn("saliency scores are constant", DegenerateSaliencyWarning, stacklevel=2)
        return np.zeros_like(r)
    return (r - lo) / (hi - lo)


@dataclass
class SaliencyMap:
    scores: np.ndarray  # per region, [0, 1]
    pixels: np.ndarray  # (H, W), [0, 1]


def finalize_saliency(f, seg):
    """Region score ``f1 - f2``, normalized to [0, 1] and painted per pixel."""
    f = np.asarray(f, dtype=np.float64)
    if not np.all(np.isfinite(f)):
        raise NumericalError("propagated scores are not finite")
    scores = normalize_scores(f[:, 0] - f[:, 1])
    return SaliencyMap(scores=scores, pixels=scores[seg.labels])


def propagate(p_sal, p_nonsal, stats, seg, alpha=ALPHA, delta1=DELTA_COLOR, delta2=DELTA_DEPTH,
              tol=CG_TOL, max_iter=CG_MAX_ITER):
    """Seed, build the graph, solve and finalize in one call."""
    a, m = build_affinity(stats, adjacency_pairs(seg), delta1, delta2)
    y = seed_labels(p_sal, p_nonsal)
    f = solve_propagation(PropagationProblem(a, m, y, alpha), tol, max_iter)
    return finalize_saliency(f, seg), y


def refine_external(smap, img, n_segments=1024, compactness=10.0, **kwargs):
    """Refine an arbitrary per-pixel saliency map of ``img`` by propagation.

    The map is averaged per superpixel to give ``p_sal``; ``p_nonsal`` is
    its complement.
    """
    smap = np.asarray(smap, dtype=np.float64)
    if smap.shape != img.depth.shape:
        raise AlignmentError(f"saliency map {smap.shape} vs image {img.depth.shape}")
    seg = slic_segment(img, n_segments, compactness)
    stats = region_stats(seg, img)
    p_sal = np.bincount(seg.labels.ravel(), weights=smap.ravel(), minlength=seg.n_actual) / stats.count
    p_sal = np.clip(p_sal, 0.0, 1.0)
    result, _ = propagate(p_sal, 1.0 - p_sal, stats, seg, **kwargs)
    return result


def write_affinity_mm(a, path):
    mmwrite(str(path), sparse.coo_matrix(a))


def write_seed_csv(path, p_sal, p_nonsal, seeds, scores):
    cls = np.where(seeds[:, 0] > 0, 1, np.where(seeds[:, 1] > 0, 2, 0))
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["region", "p_sal", "p_nonsal", "seed_class", "score"])
        for i in range(len(scores)):
            wr.writerow([i, p_sal[i], p_nonsal[i], cls[i], scores[i]])
