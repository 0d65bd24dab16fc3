"""Greedy CART-style tree growing with Gini impurity, plus fitness pruning."""

import numpy as np

from . import genome as gn
from .tree import Node, TreeConstraints, collapse

EXACT_SUBSET_LIMIT = 12


def gini(n, pos):
    """Gini impurity ``2 q (1 - q)`` of a node with ``pos`` churners among ``n``."""
    n = np.asarray(n, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        q = np.where(n > 0, np.asarray(pos) / np.where(n > 0, n, 1), 0.0)
    return 2.0 * q * (1.0 - q)


def _gain(n, pos, nl, pl):
    nr = n - nl
    pr = pos - pl
    return gini(n, pos) - (nl * gini(nl, pl) + nr * gini(nr, pr)) / n


def _subset_masks(k):
    # all subsets of the first k-1 items, in increasing bitmask order
    bits = np.arange(1, 2 ** (k - 1), dtype=np.int64)
    return ((bits[:, None] >> np.arange(k)) & 1).astype(bool)


def best_split(view, rows, c):
    """Best ``(gain, var, code, mask)`` for the rows, or None.

    Ties go to the lowest column index, then the lowest cutoff (numeric) or
    the lowest subset bitmask (categorical).
    """
    y = view.y[rows]
    n = rows.size
    pos = int(y.sum())
    best = None
    for v in range(view.p):
        x = view.codes[rows, v].astype(np.int64)
        uniq, inv = np.unique(x, return_inverse=True)
        k = uniq.size
        if k < 2:
            continue
        tot = np.bincount(inv, minlength=k)
        cpos = np.bincount(inv, weights=y, minlength=k)
        if view.iscat[v]:
            if k <= EXACT_SUBSET_LIMIT:
                member = _subset_masks(k)
                nl = member @ tot
                pl = member @ cpos
                masks = [int(sum(1 << int(uniq[i]) for i in np.flatnonzero(m))) for m in member]
            else:
                order = np.argsort(cpos / tot, kind="stable")
                nl = np.cumsum(tot[order])[:-1]
                pl = np.cumsum(cpos[order])[:-1]
                masks = []
                acc = 0
                for i in order[:-1]:
                    acc |= 1 << int(uniq[i])
                    masks.append(acc)
            codes = [-1] * len(masks)
        else:
            nl = np.cumsum(tot)[:-1]
            pl = np.cumsum(cpos)[:-1]
            masks = [0] * (k - 1)
            codes = [int(u) for u in uniq[:-1]]
        ok = (nl >= c.min_leaf) & (n - nl >= c.min_leaf)
        if not ok.any():
            continue
        gains = np.where(ok, _gain(n, pos, nl, pl), -np.inf)
        j = int(np.argmax(gains))
        if best is None or gains[j] > best[0]:
            best = (float(gains[j]), v, codes[j], masks[j])
    return best


def fit_greedy(data, c=None, min_gain=0.0):
    """Grow a tree top-down, always taking the split with the largest Gini decrease.

    Growth stops at a node when it is too small to split, the depth or leaf
    budget is used up, or the best decrease is at most ``min_gain``.
    """
    c = c or TreeConstraints()
    view = gn.TrainView(data)
    leaves = [1]

    def grow(rows, depth):
        if rows.size < c.min_split or depth >= c.max_depth or leaves[0] >= c.max_leaves:
            return None
        found = best_split(view, rows, c)
        if found is None or found[0] <= min_gain:
            return None
        _, v, code, mask = found
        x = view.codes[rows, v]
        if code >= 0:
            go_left = x <= code
        else:
            go_left = np.array([bool(mask >> int(cc) & 1) for cc in x])
        leaves[0] += 1
        left = grow(rows[go_left], depth + 1)
        right = grow(rows[~go_left], depth + 1)
        return gn.make(v, code, mask, left, right)

    g = grow(np.arange(data.n), 0)
    return gn.to_tree(g, view)


def prune_greedy(tree, data, lam, p):
    """Collapse, bottom-up, every split whose removal does not lower fitness.

    Repeats until no split can be removed, so the result is a fixed point.
    """
    from .evolve import fitness

    current = tree
    best = fitness(current, data, p, lam)
    while True:
        changed = False
        nodes = current.nodes()
        cand = [
            (d, i)
            for i, (nd, d) in enumerate(nodes)
            if isinstance(nd, Node) and not isinstance(nd.left, Node) and not isinstance(nd.right, Node)
        ]
        for _, i in sorted(cand, key=lambda t: (-t[0], t[1])):
            trial = collapse(current, i, data)
            f = fitness(trial, data, p, lam)
            if f >= best:
                current, best, changed = trial, f, True
                break
        if not changed:
            return current
