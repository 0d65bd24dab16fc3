"""Compact tree genomes over integer-coded training data.

The evolutionary search and the greedy grower work on a :class:`TrainView`,
where every numeric/ordered column is replaced by the rank of its value among
the column's distinct training values. A cutoff code ``k`` then means
"rank <= k", i.e. the midpoint between the k-th and (k+1)-th distinct value.

A genome is ``None`` for a leaf, or a tuple
``(var, code, mask, left, right, size)`` where numeric splits carry
``code >= 0`` and categorical splits ``code == -1`` plus a bitmask of the
level codes that go left. ``size`` counts the nodes of the subtree.
"""

import numpy as np

from . import kernels
from .data import CATEGORICAL
from .tree import Leaf, Node, SplitRule, Tree

LEAF = None


class TrainView:
    """Integer-coded, read-only view of a training dataset."""

    def __init__(self, data):
        self.data = data
        self.n = data.n
        self.y = np.ascontiguousarray(data.y, dtype=np.int64)
        self.iscat = np.array([c.kind == CATEGORICAL for c in data.schema], dtype=np.bool_)
        self.values = []
        codes = np.empty_like(data.X)
        for j, col in enumerate(data.schema):
            if self.iscat[j]:
                self.values.append(None)
                codes[:, j] = data.X[:, j]
            else:
                vals = np.unique(data.X[:, j])
                self.values.append(vals)
                codes[:, j] = np.searchsorted(vals, data.X[:, j])
        codes.flags.writeable = False
        self.codes = codes
        self.nlev = max([len(c.levels) for c in data.schema if c.kind == CATEGORICAL] + [1])
        self.p = data.p

    def cutoff(self, var, code):
        vals = self.values[var]
        return 0.5 * (vals[code] + vals[code + 1])

    def code_of_cutoff(self, var, cutoff):
        vals = self.values[var]
        k = int(np.searchsorted(vals, cutoff, side="right")) - 1
        return min(max(k, 0), max(len(vals) - 2, 0))


def size(g):
    return 1 if g is None else g[5]


def make(var, code, mask, left, right):
    return (var, code, mask, left, right, 1 + size(left) + size(right))


def n_leaves(g):
    return (size(g) + 1) // 2


def subtree(g, idx):
    """Subtree at preorder index ``idx``."""
    while idx:
        idx -= 1
        ls = size(g[3])
        if idx < ls:
            g = g[3]
        else:
            idx -= ls
            g = g[4]
    return g


def replace(g, idx, new):
    """Copy of ``g`` with the subtree at preorder ``idx`` replaced by ``new``."""
    if idx == 0:
        return new
    idx -= 1
    ls = size(g[3])
    if idx < ls:
        return make(g[0], g[1], g[2], replace(g[3], idx, new), g[4])
    return make(g[0], g[1], g[2], g[3], replace(g[4], idx - ls, new))


def depth_of(g, idx):
    d = 0
    while idx:
        idx -= 1
        d += 1
        ls = size(g[3])
        if idx < ls:
            g = g[3]
        else:
            idx -= ls
            g = g[4]
    return d


class Flat:
    """Preorder arrays of one genome, ready for :func:`kernels.route`."""

    __slots__ = ("feat", "thr", "iscat", "catmask", "left", "right", "depth", "size", "is_leaf")

    def __init__(self, g, nlev):
        k = size(g)
        feat = [0] * k
        thr = [0.0] * k
        iscat = [False] * k
        left = [-1] * k
        right = [-1] * k
        depth = [0] * k
        sizes = [1] * k
        masks = []
        stack = [(g, 0, 0)]
        while stack:
            nd, i, d = stack.pop()
            depth[i] = d
            if nd is None:
                continue
            sizes[i] = nd[5]
            feat[i] = nd[0]
            if nd[1] >= 0:
                thr[i] = nd[1]
            else:
                iscat[i] = True
                masks.append((i, nd[2]))
            li = i + 1
            ri = i + 1 + size(nd[3])
            left[i] = li
            right[i] = ri
            stack.append((nd[4], ri, d + 1))
            stack.append((nd[3], li, d + 1))
        self.feat = np.array(feat, dtype=np.int64)
        self.thr = np.array(thr, dtype=np.float64)
        self.iscat = np.array(iscat, dtype=np.bool_)
        self.left = np.array(left, dtype=np.int64)
        self.right = np.array(right, dtype=np.int64)
        self.depth = np.array(depth, dtype=np.int64)
        self.size = np.array(sizes, dtype=np.int64)
        self.is_leaf = self.left < 0
        catmask = np.zeros((k, nlev), dtype=np.bool_)
        for i, m in masks:
            c = 0
            while m:
                if m & 1:
                    catmask[i, c] = True
                m >>= 1
                c += 1
        self.catmask = catmask


def route(g, view):
    """``(flat, leaf_node_per_row, node_n, node_pos)`` for genome ``g``."""
    fl = Flat(g, view.nlev)
    leaf, node_n, node_pos = kernels.route(view.codes, view.y, fl.feat, fl.thr, fl.iscat, fl.catmask, fl.left, fl.right)
    return fl, leaf, node_n, node_pos


def to_tree(g, view, data=None):
    """Public :class:`Tree` for genome ``g`` with leaves fitted on the view."""
    data = view.data if data is None else data
    _, _, node_n, node_pos = route(g, view)
    counter = [0]

    def go(nd):
        i = counter[0]
        counter[0] += 1
        if nd is None:
            n = int(node_n[i])
            c = int(node_pos[i])
            return Leaf(c / n if n else 0.0, n, c)
        var = nd[0]
        if nd[1] >= 0:
            rule = SplitRule(var, cutoff=float(view.cutoff(var, nd[1])))
        else:
            levels = data.schema[var].levels
            rule = SplitRule(var, levels=frozenset(lv for c, lv in enumerate(levels) if nd[2] >> c & 1))
        left = go(nd[3])
        right = go(nd[4])
        return Node(rule, left, right)

    return Tree(go(g), data.schema, data.label_name)


def from_tree(tree, view):
    """Genome for a public tree whose schema matches the view's data."""
    levels_of = [c.levels for c in view.data.schema]

    def go(nd):
        if isinstance(nd, Leaf):
            return None
        r = nd.rule
        if r.is_categorical:
            mask = 0
            for c, lv in enumerate(levels_of[r.variable]):
                if lv in r.levels:
                    mask |= 1 << c
            return make(r.variable, -1, mask, go(nd.left), go(nd.right))
        return make(r.variable, view.code_of_cutoff(r.variable, r.cutoff), 0, go(nd.left), go(nd.right))

    return go(tree.root)
