import io

import numpy as np
import pytest

from proftree import ColumnSchema, Dataset, load_csv, stratified_split, synth_churn, write_csv
from proftree.data import (
    CATEGORICAL,
    NUMERIC,
    ORDERED,
    DataError,
    encode_labels,
    format_schema_text,
    parse_schema_text,
)


def _write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_load_infers_kinds_and_drops_missing(tmp_path):
    path = _write(tmp_path, "age,plan,churn\n30,gold,1\n,gold,0\n41,silver,no\n")
    with pytest.raises(DataError):
        load_csv(path, "churn", report=io.StringIO())
    path = _write(tmp_path, "age,plan,churn\n30,gold,1\n,gold,0\n41,silver,0\n25,NA,1\n52,gold,0\n")
    log = io.StringIO()
    d = load_csv(path, "churn", report=log)
    assert d.n == 3
    assert d.schema == (ColumnSchema("age", NUMERIC), ColumnSchema("plan", CATEGORICAL, ("gold", "silver")))
    assert d.y.tolist() == [1, 0, 0]
    assert "rows=5 dropped=2 kept=3 churners=1" in log.getvalue()


def test_label_encodings():
    assert encode_labels(["Yes", "no", "YES"]).tolist() == [1, 0, 1]
    assert encode_labels(["true", "False"]).tolist() == [1, 0]
    assert encode_labels(["churn", "no churn"]).tolist() == [1, 0]
    with pytest.raises(DataError):
        encode_labels(["1", "2"])


def test_missing_label_column_and_ragged_rows(tmp_path):
    with pytest.raises(DataError):
        load_csv(_write(tmp_path, "a,b\n1,0\n"), "churn", report=io.StringIO())
    with pytest.raises(DataError):
        load_csv(_write(tmp_path, "a,churn\n1,0,3\n"), "churn", report=io.StringIO())
    with pytest.raises(FileNotFoundError):
        load_csv(tmp_path / "nope.csv", "churn", report=io.StringIO())


def test_schema_override(tmp_path):
    path = _write(tmp_path, "size,code,churn\nsmall,1,1\nlarge,2,0\nmedium,1,0\n")
    override = {"size": (ORDERED, ("small", "medium", "large")), "code": (CATEGORICAL, ())}
    d = load_csv(path, "churn", schema_override=override, report=io.StringIO())
    assert d.schema[0].kind == ORDERED
    assert d.X[:, 0].tolist() == [0, 2, 1]
    assert d.schema[1] == ColumnSchema("code", CATEGORICAL, ("1", "2"))
    with pytest.raises(DataError):
        load_csv(path, "churn", schema_override={"size": (ORDERED, ("small", "large"))}, report=io.StringIO())
    d = load_csv(path, "churn", schema_override={"size": (CATEGORICAL, ("small",))}, extend_levels=True, report=io.StringIO())
    assert d.schema[0].levels == ("small", "large", "medium")
    with pytest.raises(DataError):
        load_csv(path, "churn", schema_override={"ghost": (NUMERIC, ())}, report=io.StringIO())


def test_schema_text_round_trip():
    schema = (ColumnSchema("a", NUMERIC), ColumnSchema("b", CATEGORICAL, ("x", "y")), ColumnSchema("c", ORDERED, ("lo", "hi")))
    parsed = parse_schema_text("# comment\n" + format_schema_text(schema))
    assert parsed == {"a": (NUMERIC, ()), "b": (CATEGORICAL, ("x", "y")), "c": (ORDERED, ("lo", "hi"))}
    with pytest.raises(DataError):
        parse_schema_text("a = weird")
    with pytest.raises(DataError):
        parse_schema_text("a = ordered")


def test_dataset_validation():
    schema = (ColumnSchema("a", NUMERIC),)
    with pytest.raises(DataError):
        Dataset(schema, np.zeros((3, 2)), np.zeros(3))
    with pytest.raises(DataError):
        Dataset(schema, np.zeros((3, 1)), np.array([0, 1, 2]))
    d = Dataset(schema, np.zeros((3, 1)), np.array([0, 1, 1]))
    with pytest.raises(ValueError):
        d.X[0, 0] = 1.0


@pytest.mark.parametrize("seed", range(5))
def test_csv_round_trip_lossless(tmp_path, seed):
    d, _ = synth_churn(300, 0.25, 3, 2, seed=seed)
    write_csv(d, tmp_path / "s.csv", tmp_path / "s.schema")
    back = load_csv(tmp_path / "s.csv", "churn", schema_override=tmp_path / "s.schema", report=io.StringIO())
    assert back.equals(d)


@pytest.mark.parametrize("seed", range(10))
def test_stratified_split_invariants(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 400))
    y = (rng.random(n) < rng.uniform(0.1, 0.6)).astype(int)
    y[:2] = [0, 1]
    d = Dataset((ColumnSchema("a", NUMERIC),), rng.random((n, 1)), y)
    plan = stratified_split(d, 5, seed)
    assert plan.replication_count == 5
    pairs = list(plan.pairs())
    assert len(pairs) == 10
    for a, b in plan.assignments:
        assert np.array_equal(np.sort(np.concatenate([a, b])), np.arange(n))
        assert abs(a.size - b.size) <= 1
        assert abs(int(y[a].sum()) - int(y[b].sum())) <= 1
    assert all(np.array_equal(x[0], z[0]) and np.array_equal(x[1], z[1]) for x, z in zip(plan.assignments, stratified_split(d, 5, seed).assignments))


def test_stratified_split_needs_both_classes():
    d = Dataset((ColumnSchema("a", NUMERIC),), np.zeros((4, 1)), np.zeros(4))
    with pytest.raises(DataError):
        stratified_split(d)


def test_synth_churn_structure():
    d, truth = synth_churn(4000, 0.3, 4, 1, seed=0)
    assert d.names == ["x1", "x2", "x3", "x4", "c1"]
    assert np.allclose(truth.cell_probs, [0.06, 0.18, 0.36, 0.6])
    assert abs(np.mean(truth.bayes_scores) - 0.3) < 0.02
    assert np.array_equal(truth.planted.predict(d), truth.bayes_scores)
    assert abs(d.y.mean() - 0.3) < 0.03
    again, _ = synth_churn(4000, 0.3, 4, 1, seed=0)
    assert again.equals(d)
    with pytest.raises(DataError):
        synth_churn(100, 0.3, 1, 0)
