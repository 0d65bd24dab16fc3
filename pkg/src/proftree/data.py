"""Tabular churn data: ingestion, schema handling, fold plans, synthetic data.

Features live in one float matrix. Numeric columns hold their values,
categorical columns hold the index of the level in ``ColumnSchema.levels``
and ordered columns hold the rank of the level. Index ``-1`` marks a level
that is not part of the schema (only produced by ``extend_levels=False``
lookups at prediction time).
"""

import csv
import io
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

NUMERIC = "numeric"
ORDERED = "ordered"
CATEGORICAL = "categorical"
KINDS = (NUMERIC, ORDERED, CATEGORICAL)

MISSING_TOKENS = {"", "na", "nan"}

_LABEL_ENCODINGS = (
    {"0": 0, "1": 1},
    {"no": 0, "yes": 1},
    {"false": 0, "true": 1},
    {"no churn": 0, "churn": 1},
)


class DataError(ValueError):
    """Invalid or unusable input data."""


@dataclass(frozen=True)
class ColumnSchema:
    name: str
    kind: str
    levels: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DataError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == NUMERIC and self.levels:
            raise DataError(f"numeric column {self.name!r} cannot declare levels")
        if self.kind != NUMERIC and not self.levels:
            raise DataError(f"{self.kind} column {self.name!r} needs at least one level")
        if len(set(self.levels)) != len(self.levels):
            raise DataError(f"column {self.name!r} has duplicate levels")

    @property
    def is_categorical(self):
        return self.kind == CATEGORICAL

    def to_dict(self):
        d = {"name": self.name, "kind": self.kind}
        if self.levels:
            d["levels"] = list(self.levels)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["kind"], tuple(d.get("levels", ())))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of N feature vectors with binary churn labels."""

    schema: tuple
    X: np.ndarray
    y: np.ndarray
    label_name: str = "churn"

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, order="C")
        y = np.array(self.y, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] != len(self.schema):
            raise DataError("feature matrix does not match schema width")
        if y.shape != (X.shape[0],):
            raise DataError("label vector length does not match rows")
        if y.size and not np.isin(y, (0, 1)).all():
            raise DataError("labels must be 0 or 1")
        names = [c.name for c in self.schema]
        if len(set(names)) != len(names):
            raise DataError("duplicate column names")
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "schema", tuple(self.schema))
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def p(self):
        return self.X.shape[1]

    @property
    def names(self):
        return [c.name for c in self.schema]

    @property
    def n_churn(self):
        return int(self.y.sum())

    def column_index(self, name):
        for i, c in enumerate(self.schema):
            if c.name == name:
                return i
        raise KeyError(name)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.schema, self.X[idx], self.y[idx], self.label_name)

    def row(self, i):
        """Decoded feature vector of row ``i`` (floats and level strings)."""
        out = []
        for j, col in enumerate(self.schema):
            v = self.X[i, j]
            out.append(float(v) if col.kind == NUMERIC else col.levels[int(v)])
        return out

    def equals(self, other):
        return (
            self.schema == other.schema
            and self.label_name == other.label_name
            and np.array_equal(self.X, other.X)
            and np.array_equal(self.y, other.y)
        )


@dataclass(frozen=True)
class FoldPlan:
    """Replicated stratified twofold partitions of ``0..N-1``."""

    replication_count: int
    assignments: tuple  # one (fold_a, fold_b) pair of sorted index arrays per replication
    seed: int

    def pairs(self):
        """Yield ``(replication, fold, train_idx, test_idx)`` in fixed order."""
        for r, (a, b) in enumerate(self.assignments):
            yield r, 0, a, b
            yield r, 1, b, a


# ---------------------------------------------------------------------------
# schema override files
# ---------------------------------------------------------------------------

def parse_schema_text(text):
    """Parse a schema override.

    One column per line, ``name = kind`` or ``name = kind: level1, level2``.
    Blank lines and ``#`` comments are ignored. Ordered columns list their
    levels from lowest to highest.
    """
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise DataError(f"schema line {lineno}: expected 'name = kind'")
        name, rhs = (s.strip() for s in line.split("=", 1))
        kind, _, levels = rhs.partition(":")
        kind = kind.strip().lower()
        lv = tuple(s.strip() for s in levels.split(",") if s.strip()) if levels else ()
        if kind not in KINDS:
            raise DataError(f"schema line {lineno}: unknown kind {kind!r}")
        if kind == ORDERED and not lv:
            raise DataError(f"schema line {lineno}: ordered column needs its level order")
        if name in out:
            raise DataError(f"schema line {lineno}: duplicate column {name!r}")
        out[name] = (kind, lv)
    return out


def format_schema_text(schema):
    lines = []
    for c in schema:
        if c.levels:
            lines.append(f"{c.name} = {c.kind}: {', '.join(c.levels)}")
        else:
            lines.append(f"{c.name} = {c.kind}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _is_missing(cell):
    return cell.strip().lower() in MISSING_TOKENS


def _parses_float(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def encode_labels(values):
    lowered = [v.strip().lower() for v in values]
    present = set(lowered)
    for enc in _LABEL_ENCODINGS:
        if present <= set(enc):
            return np.array([enc[v] for v in lowered], dtype=np.int64)
    raise DataError(f"unrecognized label encoding: {sorted(present)[:5]}")


def load_csv(path, label_name, schema_override=None, extend_levels=False, report=None):
    """Read a churn table from a headed CSV file.

    Rows with any missing cell are dropped. Column kinds are inferred
    (numeric iff every cell parses as a number, categorical otherwise, levels
    in first-appearance order) unless ``schema_override`` (a path, a dict as
    returned by :func:`parse_schema_text`, or a sequence of ColumnSchema)
    says otherwise. With ``extend_levels`` unknown categorical values are
    appended to the declared levels instead of being rejected.

    An ingestion summary is written to ``report`` (stderr by default).
    """
    path = Path(path)
    if report is None:
        report = sys.stderr
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        raw = [r for r in reader if r]
    if label_name not in header:
        raise DataError(f"{path}: label column {label_name!r} not found")
    width = len(header)
    for i, r in enumerate(raw):
        if len(r) != width:
            raise DataError(f"{path}: row {i + 2} has {len(r)} cells, expected {width}")
    kept = [r for r in raw if not any(_is_missing(c) for c in r)]
    dropped = len(raw) - len(kept)
    if not kept:
        raise DataError(f"{path}: no complete rows")

    li = header.index(label_name)
    y = encode_labels([r[li] for r in kept])

    override = _normalize_override(schema_override)
    schema = []
    cols = []
    for j, name in enumerate(header):
        if j == li:
            continue
        cells = [r[j].strip() for r in kept]
        kind, levels = override.get(name, (None, ()))
        if kind is None:
            kind = NUMERIC if all(_parses_float(c) for c in cells) else CATEGORICAL
        if kind == NUMERIC:
            try:
                col = np.array([float(c) for c in cells])
            except ValueError as exc:
                raise DataError(f"column {name!r} declared numeric: {exc}") from None
            schema.append(ColumnSchema(name, NUMERIC))
        else:
            declared = bool(levels)
            levels = list(levels)
            index = {lv: k for k, lv in enumerate(levels)}
            for c in cells:
                if c not in index:
                    if declared and not extend_levels:
                        raise DataError(f"column {name!r}: value {c!r} not among declared levels")
                    index[c] = len(levels)
                    levels.append(c)
            col = np.array([index[c] for c in cells], dtype=np.float64)
            schema.append(ColumnSchema(name, kind, tuple(levels)))
        cols.append(col)
    unknown = set(override) - set(header)
    if unknown:
        raise DataError(f"schema override names unknown columns: {sorted(unknown)}")

    X = np.column_stack(cols) if cols else np.empty((len(kept), 0))
    data = Dataset(tuple(schema), X, y, label_name)
    print(f"read {path}: rows={len(raw)} dropped={dropped} kept={data.n} churners={data.n_churn}", file=report)
    for c in schema:
        extra = f" levels={len(c.levels)}" if c.levels else ""
        print(f"  column {c.name}: {c.kind}{extra}", file=report)
    return data


def _normalize_override(schema_override):
    if schema_override is None:
        return {}
    if isinstance(schema_override, (str, Path)):
        return parse_schema_text(Path(schema_override).read_text(encoding="utf-8"))
    if isinstance(schema_override, dict):
        return dict(schema_override)
    return {c.name: (c.kind, tuple(c.levels)) for c in schema_override}


def to_csv_text(data):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(data.names + [data.label_name])
    for i in range(data.n):
        cells = [repr(v) if isinstance(v, float) else v for v in data.row(i)]
        w.writerow(cells + [int(data.y[i])])
    return buf.getvalue()


def write_csv(data, path, schema_path=None):
    """Write ``data`` as CSV; optionally write a schema file for lossless reloads."""
    Path(path).write_text(to_csv_text(data), encoding="utf-8")
    if schema_path is not None:
        Path(schema_path).write_text(format_schema_text(data.schema), encoding="utf-8")


# ---------------------------------------------------------------------------
# folds
# ---------------------------------------------------------------------------

def stratified_split(data, replications=5, seed=0):
    """Replicated twofold splits stratified on the churn label.

    Per replication, churners and non-churners are shuffled separately,
    concatenated, and dealt alternately into the two folds, so fold sizes
    differ by at most one and so do the per-fold churner counts.
    """
    if data.n < 2:
        raise DataError("need at least two rows to split")
    pos = np.flatnonzero(data.y == 1)
    neg = np.flatnonzero(data.y == 0)
    if pos.size == 0 or neg.size == 0:
        raise DataError("stratified split needs both classes")
    out = []
    for r in range(replications):
        rng = np.random.default_rng([seed, r])
        order = np.concatenate([rng.permutation(pos), rng.permutation(neg)])
        a = np.sort(order[0::2])
        b = np.sort(order[1::2])
        if rng.integers(2):
            a, b = b, a
        out.append((a, b))
    return FoldPlan(replications, tuple(out), seed)


# ---------------------------------------------------------------------------
# synthetic churn data with a planted depth-2 tree
# ---------------------------------------------------------------------------

PLANTED_RISK = (0.2, 0.6, 1.2, 2.0)
PLANTED_GRID = 100


@dataclass
class SynthTruth:
    """Ground truth for :func:`synth_churn`."""

    planted: object  # proftree.tree.Tree with Bayes churn probabilities as leaf scores
    bayes_scores: np.ndarray
    cell_probs: tuple
    planted_columns: tuple = field(default=(0, 1))


def synth_churn(n=2000, churn_rate=0.3, p_numeric=4, p_categorical=1, seed=0):
    """Generate a churn dataset whose churn probability is a depth-2 tree.

    Columns 0 and 1 are numeric on the grid ``k/100``; the planted tree
    splits column 0 at 0.495 and then column 1 at 0.495 on both sides, giving
    four equiprobable cells whose churn probabilities average ``churn_rate``.
    Remaining numeric columns are rounded Gaussian noise and categorical
    columns draw uniformly from four levels.

    Returns ``(dataset, truth)``.
    """
    from .tree import Leaf, Node, SplitRule, Tree

    if not 0 < churn_rate < 1:
        raise DataError("churn_rate must lie in (0, 1)")
    if n < 20:
        raise DataError("n must be at least 20")
    if p_numeric < 2 or p_categorical < 0:
        raise DataError("need p_numeric >= 2 and p_categorical >= 0")
    rng = np.random.default_rng(seed)
    risk = np.array(PLANTED_RISK)
    probs = np.clip(churn_rate * risk / risk.mean(), 0.01, 0.99)

    cols = []
    schema = []
    g = rng.integers(0, PLANTED_GRID, size=(n, 2)) / PLANTED_GRID
    for j in range(p_numeric):
        if j < 2:
            cols.append(g[:, j])
        else:
            cols.append(np.round(rng.normal(size=n), 3))
        schema.append(ColumnSchema(f"x{j + 1}", NUMERIC))
    levels = ("a", "b", "c", "d")
    for j in range(p_categorical):
        cols.append(rng.integers(0, len(levels), size=n).astype(np.float64))
        schema.append(ColumnSchema(f"c{j + 1}", CATEGORICAL, levels))

    cut = (PLANTED_GRID // 2 - 0.5) / PLANTED_GRID
    cell = 2 * (g[:, 0] > cut) + (g[:, 1] > cut)
    bayes = probs[cell]
    y = (rng.random(n) < bayes).astype(np.int64)
    X = np.column_stack(cols)
    data = Dataset(tuple(schema), X, y, "churn")

    def leaf(k):
        m = cell == k
        return Leaf(float(probs[k]), int(m.sum()), int(y[m].sum()))

    planted = Tree(
        Node(
            SplitRule(0, cutoff=cut),
            Node(SplitRule(1, cutoff=cut), leaf(0), leaf(1)),
            Node(SplitRule(1, cutoff=cut), leaf(2), leaf(3)),
        ),
        data.schema,
        data.label_name,
    )
    return data, SynthTruth(planted, bayes, tuple(float(q) for q in probs))
