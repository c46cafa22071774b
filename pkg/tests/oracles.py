"""Independent reference implementations used by the unit and acceptance tests."""

import math
from fractions import Fraction

import numpy as np

from conftest import toy_stats
from rsdf import propagate as P


def otsu_oracle(values):
    """Exhaustive scan over the 255 interior edges of a 256-bin histogram.

    Between-class variance on bin centres ``(2k + 1) / 512``, evaluated with
    exact rationals from direct per-class sums; first maximum wins.
    """
    counts = np.zeros(256, dtype=np.int64)
    for v in values:
        counts[min(int(v * 256), 255)] += 1
    centre = 2 * np.arange(256, dtype=np.int64) + 1
    n = int(counts.sum())
    best, best_k = None, None
    for k in range(1, 256):
        n0, n1 = int(counts[:k].sum()), int(counts[k:].sum())
        if n0 == 0 or n1 == 0:
            continue
        mu0 = Fraction(int(counts[:k] @ centre[:k]), 512 * n0)
        mu1 = Fraction(int(counts[k:] @ centre[k:]), 512 * n1)
        var = Fraction(n0 * n1, n * n) * (mu0 - mu1) ** 2
        if best is None or var > best:
            best, best_k = var, k
    return None if best_k is None else best_k / 256


def naive_features(stats, bg, sigma_l=0.15, sigma_g=0.45, delta_c=20.0):
    """Double-loop reference in plain Python floats, written from the definitions."""
    n = stats.n
    lab = stats.mean_lab.tolist()
    dep = stats.mean_depth.tolist()
    pos = stats.centroid.tolist()
    t = stats.weight.tolist()
    cl, cg, dl, dg, cs = (np.zeros((n, n)) for _ in range(5))
    for i in range(n):
        sims = [math.exp(-sum((a - b) ** 2 for a, b in zip(lab[i], lab[j])) / (2 * delta_c**2)) for j in range(n)]
        ux = sum(s * pos[j][0] for j, s in enumerate(sims)) / sum(sims)
        uy = sum(s * pos[j][1] for j, s in enumerate(sims)) / sum(sims)
        for j in range(n):
            dx2 = (pos[i][0] - pos[j][0]) ** 2 + (pos[i][1] - pos[j][1]) ** 2
            phi_l = math.exp(-dx2 / (2 * sigma_l**2))
            phi_g = math.exp(-dx2 / (2 * sigma_g**2))
            dc = math.sqrt(sum((a - b) ** 2 for a, b in zip(lab[i], lab[j])))
            dd = abs(dep[i] - dep[j])
            cl[i, j] = t[j] * phi_l * dc
            cg[i, j] = t[j] * phi_g * dc
            dl[i, j] = t[j] * phi_l * dd
            dg[i, j] = t[j] * phi_g * dd
            cs[i, j] = sims[j] * math.hypot(pos[j][0] - ux, pos[j][1] - uy)
    cb = np.array([[cg[i, b] for b in bg] for i in range(n)])
    db = np.array([[dg[i, b] for b in bg] for i in range(n)])
    return cl, cg, dl, dg, cs, cb, db


def dense_affinity(stats, pairs, d1, d2):
    n = stats.n
    adj = np.zeros((n, n), dtype=int)
    for i, j in pairs:
        adj[i, j] = adj[j, i] = 1
    reach = ((adj + adj @ adj) > 0).astype(float)
    np.fill_diagonal(reach, 0)
    a = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if reach[i, j]:
                dc2 = np.sum((stats.mean_lab[i] - stats.mean_lab[j]) ** 2)
                dd2 = (stats.mean_depth[i] - stats.mean_depth[j]) ** 2
                a[i, j] = np.exp(-dc2 / (2 * d1**2)) * np.exp(-dd2 / (2 * d2**2))
    return a


def random_graph(n, rng):
    """A random connected graph: a spanning path plus extra edges."""
    order = rng.permutation(n)
    pairs = {tuple(sorted((int(order[k]), int(order[k + 1])))) for k in range(n - 1)}
    for _ in range(n):
        i, j = rng.integers(0, n, 2)
        if i != j:
            pairs.add((int(min(i, j)), int(max(i, j))))
    return np.array(sorted(pairs))


def random_problem(n, rng, alpha=0.99):
    stats = toy_stats(n, rng)
    a, m = P.build_affinity(stats, random_graph(n, rng), 20.0, 0.2)
    y = np.zeros((n, 2))
    lab = rng.integers(0, 3, n)
    y[lab == 1, 0] = 1
    y[lab == 2, 1] = 1
    return P.PropagationProblem(a, m, y, alpha)


def dense_solve(problem):
    a = problem.affinity.toarray()
    d = 1 / np.sqrt(problem.degree)
    s = d[:, None] * a * d[None, :]
    return np.linalg.solve(np.eye(problem.n) - problem.alpha * s, problem.seeds)


def curve_oracle(maps, gts):
    """Per-pixel counting at each of the 256 thresholds."""
    prec, rec = np.zeros(256), np.zeros(256)
    for m, g in zip(maps, gts):
        for k in range(256):
            t = k / 255
            tp = fp = fn = 0
            for v, s in zip(m.ravel(), g.ravel()):
                if v >= t and s:
                    tp += 1
                elif v >= t:
                    fp += 1
                elif s:
                    fn += 1
            if tp + fp:
                prec[k] += tp / (tp + fp)
            else:
                prec[k] += 1.0 if g.sum() == 0 else 0.0
            rec[k] += tp / (tp + fn) if tp + fn else 1.0
    return prec / len(maps), rec / len(maps)
