"""Brute-force reference implementations used only by the tests.

None of these share code with the package: they work from raw scores and
labels, sweep every threshold explicitly, and integrate with scipy.
"""

import itertools
import math
import warnings

import numpy as np
from scipy import integrate, special


def sweep_counts(scores, labels):
    """Targeted (churners, non-churners) for "target nobody" and every distinct cutoff.

    Row ``k`` targets everybody whose score is among the ``k`` largest
    distinct values.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    cuts = sorted(set(scores.tolist()), reverse=True)
    rows = [(0, 0)]
    for c in cuts:
        sel = scores >= c
        rows.append((int(labels[sel].sum()), int((labels[sel] == 0).sum())))
    return np.array(rows, dtype=float)


def profit_at(gamma, counts, n, clv, d, f):
    """Per-customer profit of every candidate campaign at acceptance rate ``gamma``."""
    delta, phi = d / clv, f / clv
    churners, nons = counts[:, 0], counts[:, 1]
    return clv * ((gamma * (1 - delta) - phi) * churners - (delta + phi) * nons) / n


def _argmax(gamma, counts, n, clv, d, f):
    return int(np.argmax(profit_at(gamma, counts, n, clv, d, f)))


def empc_quadrature(scores, labels, clv, d, f, alpha, beta):
    """EMPC and its expected targeted fraction by piecewise adaptive quadrature.

    The optimal campaign only moves toward larger targets as gamma grows, so
    recursive bisection on a change of the per-gamma argmax isolates every
    switch point to ~1e-14. On each piece the profit is linear in gamma and is
    integrated against the Beta density with ``scipy.integrate.quad``.
    """
    labels = np.asarray(labels)
    n = labels.size
    counts = sweep_counts(scores, labels)
    lnb = special.betaln(alpha, beta)

    def pdf(g):
        if g <= 0.0 or g >= 1.0:
            return 0.0
        return math.exp((alpha - 1) * math.log(g) + (beta - 1) * math.log1p(-g) - lnb)

    pieces = []

    def split(a, b, ka, kb):
        if ka == kb:
            pieces.append((a, b, ka))
            return
        if b - a < 1e-14:
            pieces.append((a, b, ka))
            return
        m = 0.5 * (a + b)
        km = _argmax(m, counts, n, clv, d, f)
        split(a, m, ka, km)
        split(m, b, km, kb)

    grid = np.linspace(0.0, 1.0, 65)
    ks = [_argmax(g, counts, n, clv, d, f) for g in grid]
    for a, b, ka, kb in zip(grid[:-1], grid[1:], ks[:-1], ks[1:]):
        split(float(a), float(b), ka, kb)

    value = 0.0
    eta = 0.0
    for a, b, k in pieces:
        if b <= a:
            continue
        c, nn = counts[k]
        slope = clv * (1 - d / clv) * c / n
        icpt = -clv * ((f / clv) * c + (d / clv + f / clv) * nn) / n
        with warnings.catch_warnings():
            # slivers a few ulps wide around switch points make quad complain
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            v, _ = integrate.quad(lambda g: (slope * g + icpt) * pdf(g), a, b, epsabs=1e-12, epsrel=1e-11, limit=200)
            w, _ = integrate.quad(pdf, a, b, epsabs=1e-13, epsrel=1e-11, limit=200)
        value += v
        eta += (c + nn) / n * w
    return value, eta


def auc_pairs(scores, labels):
    """Mann-Whitney AUC from every (churner, non-churner) pair, ties counting one half."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    greater = 0
    ties = 0
    for s in pos:
        greater += int((s > neg).sum())
        ties += int((s == neg).sum())
    return (2 * greater + ties) / (2 * pos.size * neg.size)


def mer_sweep(scores, labels):
    """Smallest error rate of "churn iff score > t" over every threshold."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    cands = [-np.inf] + sorted(set(scores.tolist()))
    best = labels.size
    for t in cands:
        pred = scores > t
        best = min(best, int((pred != (labels == 1)).sum()))
    return best / labels.size


def random_sample(rng, n_max=500, n_min=2):
    """Scores with plenty of ties and both classes present."""
    n = int(rng.integers(n_min, n_max + 1))
    levels = int(rng.integers(1, n + 1))
    scores = rng.integers(0, levels, n) / max(levels, 1)
    if rng.random() < 0.3:
        scores = rng.random(n)
    labels = (rng.random(n) < rng.uniform(0.05, 0.95)).astype(int)
    labels[0] = 1
    labels[-1] = 0
    return scores, labels


def random_params(rng):
    clv = float(rng.uniform(50, 500))
    d = float(rng.uniform(0.5, 0.3 * clv))
    f = float(rng.uniform(0.1, 10))
    alpha = float(rng.uniform(1.05, 20))
    beta = float(rng.uniform(1.05, 20))
    return clv, d, f, alpha, beta


def gini_decrease(y, left):
    """Weighted Gini impurity decrease of splitting labels ``y`` by the mask ``left``."""
    def g(v):
        if v.size == 0:
            return 0.0
        q = v.mean()
        return 2 * q * (1 - q)

    n = y.size
    return g(y) - (left.sum() * g(y[left]) + (~left).sum() * g(y[~left])) / n


def exhaustive_best_gain(X, y, categorical, min_leaf):
    """Best Gini decrease over every (column, cutoff) and every (column, level subset)."""
    best = -np.inf
    for v in range(X.shape[1]):
        vals = np.unique(X[:, v])
        if categorical[v]:
            sides = []
            for r in range(1, vals.size):
                sides.extend(np.isin(X[:, v], s) for s in itertools.combinations(vals.tolist(), r))
        else:
            sides = [X[:, v] <= 0.5 * (a + b) for a, b in zip(vals[:-1], vals[1:])]
        for left in sides:
            nl = int(left.sum())
            if nl >= min_leaf and y.size - nl >= min_leaf:
                best = max(best, gini_decrease(y, left))
    return best
