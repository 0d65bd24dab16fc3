"""Binary classification trees with leaf churn-rate scores."""

import json
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Union

import numpy as np

from . import kernels
from .data import CATEGORICAL, NUMERIC, ORDERED, ColumnSchema, DataError

JSON_FORMAT = "proftree-tree"
JSON_VERSION = 1


class EmptyLeafError(DataError):
    """A leaf region receives no rows of the fitting data."""


class SchemaMismatch(DataError):
    """A tree does not fit the columns of a dataset."""


@dataclass(frozen=True)
class SplitRule:
    """Route left iff ``value <= cutoff`` (numeric/ordered) or ``level in levels``."""

    variable: int
    cutoff: Optional[float] = None
    levels: Optional[frozenset] = None

    def __post_init__(self):
        if (self.cutoff is None) == (self.levels is None):
            raise ValueError("a split rule has either a cutoff or a level set")
        if self.levels is not None:
            object.__setattr__(self, "levels", frozenset(self.levels))
            if not self.levels:
                raise ValueError("categorical split needs a non-empty level set")

    @property
    def is_categorical(self):
        return self.levels is not None


@dataclass(frozen=True)
class Leaf:
    p_hat: float = 0.0
    n: int = 0
    n_churn: int = 0


@dataclass(frozen=True)
class Node:
    rule: SplitRule
    left: Union["Node", Leaf]
    right: Union["Node", Leaf]


@dataclass(frozen=True)
class TreeConstraints:
    min_internal: int = 20
    min_leaf: int = 7
    max_depth: int = 9
    max_leaves: Optional[int] = None

    def __post_init__(self):
        if self.max_leaves is None:
            object.__setattr__(self, "max_leaves", 2 ** self.max_depth)
        if min(self.min_internal, self.min_leaf, self.max_depth, self.max_leaves) < 1:
            raise ValueError("tree constraints must all be >= 1")

    @property
    def min_split(self):
        """Smallest node that can possibly be split."""
        return max(self.min_internal, 2 * self.min_leaf)


class Violation(NamedTuple):
    kind: str  # "leaf_size" | "internal_size" | "depth" | "leaves"
    node: int  # preorder node id, -1 for whole-tree checks
    value: int
    limit: int


class Routing(NamedTuple):
    leaf: np.ndarray  # leaf number (preorder among leaves) per row
    node_n: np.ndarray  # rows reaching each node, preorder
    node_pos: np.ndarray  # churners reaching each node
    unseen: int  # rows carrying a categorical level unknown to the tree


def _walk(node, depth=0):
    yield node, depth
    if isinstance(node, Node):
        yield from _walk(node.left, depth + 1)
        yield from _walk(node.right, depth + 1)


@dataclass(frozen=True, eq=False)
class Tree:
    root: Union[Node, Leaf]
    schema: tuple
    label_name: str = "churn"
    _flat: dict = field(default_factory=dict, repr=False, compare=False)

    # -- structure -----------------------------------------------------------

    def nodes(self):
        """``(node, depth)`` pairs in preorder."""
        return list(_walk(self.root))

    def leaves(self):
        return [nd for nd, _ in _walk(self.root) if isinstance(nd, Leaf)]

    @property
    def n_leaves(self):
        return sum(1 for nd, _ in _walk(self.root) if isinstance(nd, Leaf))

    @property
    def n_internal(self):
        return sum(1 for nd, _ in _walk(self.root) if isinstance(nd, Node))

    @property
    def depth(self):
        return max(d for _, d in _walk(self.root))

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        return self.root == other.root and self.schema == other.schema and self.label_name == other.label_name

    __hash__ = None

    # -- routing -------------------------------------------------------------

    def _column_map(self, data):
        if data.schema == self.schema:
            return list(range(len(self.schema)))
        out = []
        for col in self.schema:
            try:
                j = data.column_index(col.name)
            except KeyError:
                raise SchemaMismatch(f"column {col.name!r} missing from data") from None
            other = data.schema[j]
            same_family = (col.kind == CATEGORICAL) == (other.kind == CATEGORICAL)
            if not same_family:
                raise SchemaMismatch(f"column {col.name!r}: {col.kind} in tree, {other.kind} in data")
            if col.kind == ORDERED and tuple(other.levels[: len(col.levels)]) != col.levels:
                raise SchemaMismatch(f"ordered column {col.name!r} has a different level order")
            out.append(j)
        return out

    def _flatten(self, data):
        if self._flat.get("schema") == data.schema:
            return self._flat["arrays"]
        cmap = self._column_map(data)
        nodes = self.nodes()
        k = len(nodes)
        nlev = max([len(c.levels) for c in data.schema if c.kind == CATEGORICAL] + [0])
        feat = np.zeros(k, dtype=np.int64)
        thr = np.zeros(k)
        iscat = np.zeros(k, dtype=np.bool_)
        catmask = np.zeros((k, nlev), dtype=np.bool_)
        left = np.full(k, -1, dtype=np.int64)
        right = np.full(k, -1, dtype=np.int64)
        leaf_no = np.full(k, -1, dtype=np.int64)
        cat_cols = set()
        counter = [0]
        leaf_counter = [0]

        def fill(nd):
            i = counter[0]
            counter[0] += 1
            if isinstance(nd, Leaf):
                leaf_no[i] = leaf_counter[0]
                leaf_counter[0] += 1
                return i
            r = nd.rule
            j = cmap[r.variable]
            feat[i] = j
            if r.is_categorical:
                iscat[i] = True
                cat_cols.add(j)
                for c, lv in enumerate(data.schema[j].levels):
                    catmask[i, c] = lv in r.levels
            else:
                thr[i] = r.cutoff
            left[i] = fill(nd.left)
            right[i] = fill(nd.right)
            return i

        fill(self.root)
        arrays = (feat, thr, iscat, catmask, left, right, leaf_no, sorted(cat_cols))
        self._flat["schema"] = data.schema
        self._flat["arrays"] = arrays
        return arrays

    def route(self, data):
        """Route every row of ``data``; see :class:`Routing`."""
        feat, thr, iscat, catmask, left, right, leaf_no, cat_cols = self._flatten(data)
        leaf_node, node_n, node_pos = kernels.route(data.X, data.y, feat, thr, iscat, catmask, left, right)
        unseen = 0
        if cat_cols:
            bad = np.zeros(data.n, dtype=bool)
            for j in cat_cols:
                known = set(self.schema[self._tree_col(data, j)].levels)
                codes = [c for c, lv in enumerate(data.schema[j].levels) if lv not in known]
                if codes:
                    bad |= np.isin(data.X[:, j], codes)
            unseen = int(bad.sum())
        return Routing(leaf_no[leaf_node], node_n, node_pos, unseen)

    def _tree_col(self, data, j):
        name = data.schema[j].name
        for i, c in enumerate(self.schema):
            if c.name == name:
                return i
        raise SchemaMismatch(name)

    def leaf_scores(self):
        return np.array([lf.p_hat for lf in self.leaves()])

    def predict(self, data):
        """Churn score of every row."""
        return self.leaf_scores()[self.route(data).leaf]


def fit_leaves(tree, data):
    """Refit every leaf's churn fraction and count on ``data``.

    Raises :class:`EmptyLeafError` if some leaf receives no rows.
    """
    routing = tree.route(data)
    counter = [0]

    def refit(nd):
        i = counter[0]
        counter[0] += 1
        if isinstance(nd, Leaf):
            n = int(routing.node_n[i])
            if n == 0:
                raise EmptyLeafError(f"leaf at node {i} receives no rows")
            c = int(routing.node_pos[i])
            return Leaf(c / n, n, c)
        left = refit(nd.left)
        right = refit(nd.right)
        return Node(nd.rule, left, right)

    return Tree(refit(tree.root), tree.schema, tree.label_name)


def _goes_left(rule, col, value):
    if rule.is_categorical:
        if not isinstance(value, str):
            if col.kind == CATEGORICAL and float(value).is_integer() and 0 <= int(value) < len(col.levels):
                value = col.levels[int(value)]
            else:
                return False
        return value in rule.levels
    if isinstance(value, str):
        if col.kind != ORDERED:
            value = float(value)
        else:
            value = col.levels.index(value) if value in col.levels else np.nan
    return value <= rule.cutoff


def score(tree, x):
    """Churn score of one feature vector (numbers and/or level strings).

    Unknown categorical levels take the right branch.
    """
    nd = tree.root
    while isinstance(nd, Node):
        col = tree.schema[nd.rule.variable]
        nd = nd.left if _goes_left(nd.rule, col, x[nd.rule.variable]) else nd.right
    return nd.p_hat


def classify(tree, x, t):
    """0 iff the score is at most ``t``."""
    return 0 if score(tree, x) <= t else 1


def check_constraints(tree, data, c):
    """List every constraint the tree violates on ``data`` (empty means ok)."""
    routing = tree.route(data)
    out = []
    for i, (nd, _) in enumerate(tree.nodes()):
        n = int(routing.node_n[i])
        if isinstance(nd, Leaf):
            if n < c.min_leaf:
                out.append(Violation("leaf_size", i, n, c.min_leaf))
        elif n < c.min_internal:
            out.append(Violation("internal_size", i, n, c.min_internal))
    if tree.depth > c.max_depth:
        out.append(Violation("depth", -1, tree.depth, c.max_depth))
    if tree.n_leaves > c.max_leaves:
        out.append(Violation("leaves", -1, tree.n_leaves, c.max_leaves))
    return out


def collapse(tree, node_id, data=None):
    """Replace the subtree at preorder ``node_id`` by a leaf (refit when data is given)."""
    counter = [0]

    def go(nd):
        i = counter[0]
        counter[0] += 1
        if i == node_id:
            skip = sum(1 for _ in _walk(nd)) - 1
            counter[0] += skip
            if isinstance(nd, Leaf):
                return nd
            lv = [x for x, _ in _walk(nd) if isinstance(x, Leaf)]
            n = sum(x.n for x in lv)
            cc = sum(x.n_churn for x in lv)
            return Leaf(cc / n if n else 0.0, n, cc)
        if isinstance(nd, Leaf):
            return nd
        return Node(nd.rule, go(nd.left), go(nd.right))

    out = Tree(go(tree.root), tree.schema, tree.label_name)
    return fit_leaves(out, data) if data is not None else out


# ---------------------------------------------------------------------------
# export / import
# ---------------------------------------------------------------------------

def _node_to_dict(nd, schema):
    if isinstance(nd, Leaf):
        return {"leaf": True, "p_hat": nd.p_hat, "n": nd.n, "n_churn": nd.n_churn}
    r = nd.rule
    d = {"leaf": False, "variable": r.variable, "name": schema[r.variable].name}
    if r.is_categorical:
        levels = schema[r.variable].levels
        d["levels"] = sorted(r.levels, key=lambda lv: (levels.index(lv) if lv in levels else len(levels), lv))
    else:
        d["cutoff"] = r.cutoff
    d["left"] = _node_to_dict(nd.left, schema)
    d["right"] = _node_to_dict(nd.right, schema)
    return d


def _node_from_dict(d):
    if d["leaf"]:
        return Leaf(float(d["p_hat"]), int(d["n"]), int(d["n_churn"]))
    if "levels" in d:
        rule = SplitRule(int(d["variable"]), levels=frozenset(d["levels"]))
    else:
        rule = SplitRule(int(d["variable"]), cutoff=float(d["cutoff"]))
    return Node(rule, _node_from_dict(d["left"]), _node_from_dict(d["right"]))


def to_json(tree):
    doc = {
        "format": JSON_FORMAT,
        "version": JSON_VERSION,
        "label": tree.label_name,
        "schema": [c.to_dict() for c in tree.schema],
        "root": _node_to_dict(tree.root, tree.schema),
    }
    return json.dumps(doc, indent=2) + "\n"


def from_json(text):
    doc = json.loads(text)
    if doc.get("format") != JSON_FORMAT:
        raise ValueError("not a proftree tree document")
    if doc.get("version") != JSON_VERSION:
        raise ValueError(f"unsupported tree format version {doc.get('version')}")
    schema = tuple(ColumnSchema.from_dict(c) for c in doc["schema"])
    return Tree(_node_from_dict(doc["root"]), schema, doc["label"])


def _fmt(x):
    return f"{x:.6g}"


def _conditions(rule, schema):
    name = schema[rule.variable].name
    if rule.is_categorical:
        levels = schema[rule.variable].levels
        lv = ", ".join(sorted(rule.levels, key=lambda s: levels.index(s) if s in levels else len(levels)))
        return f"{name} in {{{lv}}}", f"{name} not in {{{lv}}}"
    if schema[rule.variable].kind == ORDERED:
        levels = schema[rule.variable].levels
        k = int(np.floor(rule.cutoff))
        if 0 <= k < len(levels):
            return f"{name} <= {levels[k]}", f"{name} > {levels[k]}"
    return f"{name} <= {_fmt(rule.cutoff)}", f"{name} > {_fmt(rule.cutoff)}"


def _leaf_text(lf):
    return f"p={lf.p_hat:.4f} (n={lf.n})"


def to_text(tree):
    if isinstance(tree.root, Leaf):
        return f"root: {_leaf_text(tree.root)}\n"
    lines = []

    def go(nd, indent):
        cond = _conditions(nd.rule, tree.schema)
        for child, text in ((nd.left, cond[0]), (nd.right, cond[1])):
            if isinstance(child, Leaf):
                lines.append(f"{indent}{text}: {_leaf_text(child)}")
            else:
                lines.append(f"{indent}{text}")
                go(child, indent + "|   ")

    go(tree.root, "")
    return "\n".join(lines) + "\n"


def to_dot(tree):
    lines = ["digraph tree {", '  node [fontname="Helvetica"];']
    counter = [0]

    def go(nd):
        i = counter[0]
        counter[0] += 1
        if isinstance(nd, Leaf):
            lines.append(f'  n{i} [shape=box, label="p={nd.p_hat:.4f}\\nn={nd.n}"];')
            return i
        name = tree.schema[nd.rule.variable].name
        lines.append(f'  n{i} [shape=ellipse, label="{name}"];')
        cond = _conditions(nd.rule, tree.schema)
        li = go(nd.left)
        ri = go(nd.right)
        for child, text in ((li, cond[0]), (ri, cond[1])):
            label = text[len(name) + 1 :].replace('"', '\\"')
            lines.append(f'  n{i} -> n{child} [label="{label}"];')
        return i

    go(tree.root)
    lines.append("}")
    return "\n".join(lines) + "\n"


def export(tree, fmt="json"):
    if fmt == "json":
        return to_json(tree)
    if fmt == "dot":
        return to_dot(tree)
    if fmt == "text":
        return to_text(tree)
    raise ValueError(f"unknown export format {fmt!r}")


def single_leaf(data):
    """The one-leaf tree fitted to ``data``."""
    n = data.n
    c = data.n_churn
    return Tree(Leaf(c / n if n else 0.0, n, c), data.schema, data.label_name)


def with_leaf_scores(tree, scores):
    """Copy of ``tree`` with leaf scores replaced in preorder (for tests and oracles)."""
    it = iter(scores)

    def go(nd):
        if isinstance(nd, Leaf):
            return replace(nd, p_hat=float(next(it)))
        return Node(nd.rule, go(nd.left), go(nd.right))

    return Tree(go(tree.root), tree.schema, tree.label_name)


__all__ = [
    "EmptyLeafError",
    "Leaf",
    "Node",
    "NUMERIC",
    "SchemaMismatch",
    "SplitRule",
    "Tree",
    "TreeConstraints",
    "Violation",
    "check_constraints",
    "classify",
    "collapse",
    "export",
    "fit_leaves",
    "from_json",
    "score",
    "single_leaf",
]
