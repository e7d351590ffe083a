import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrpinfer.census import CensusCellTable, load_census_csv, weights, write_census_csv
from mrpinfer.errors import CensusError
from mrpinfer.schema import CategoricalSchema, FactorDef, Selector


@pytest.fixture(scope="module")
def small_schema():
    return CategoricalSchema(
        factors=(FactorDef("g", ("a", "b"), False), FactorDef("h", ("x", "y", "z"), False))
    )


def _table(schema, counts):
    return CensusCellTable(schema=schema, counts=np.array(counts))


def test_weights_hand_ratio(two_level_schema):
    table = _table(two_level_schema, [100, 300])
    ids, w = weights(table, Selector.all())
    assert np.allclose(w, [0.25, 0.75])
    assert list(ids) == [0, 1]


def test_weights_single_cell(two_level_schema):
    table = _table(two_level_schema, [100, 300])
    ids, w = weights(table, Selector.make(g="a"))
    assert list(ids) == [0]
    assert w.tolist() == [1.0]


def test_weights_sum_to_one(small_schema):
    table = _table(small_schema, [5, 0, 11, 2, 7, 3])
    for sel in (
        Selector.all(),
        Selector.make(g="a"),
        Selector.make(h=("x", "z")),
        Selector.make(g="b", h=("y", "z")),
    ):
        _, w = weights(table, sel)
        assert abs(w.sum() - 1.0) < 1e-12


def test_weights_restriction_consistency(small_schema):
    # weights(all) restricted to S then renormalized equals weights(S)
    table = _table(small_schema, [5, 1, 11, 2, 7, 3])
    sel = Selector.make(h=("x", "y"))
    ids_all, w_all = weights(table, Selector.all())
    ids_s, w_s = weights(table, sel)
    keep = np.isin(ids_all, ids_s)
    restricted = w_all[keep] / w_all[keep].sum()
    assert np.allclose(restricted, w_s, atol=1e-15)


def test_empty_subpopulation_error(small_schema):
    table = _table(small_schema, [5, 0, 11, 2, 7, 0])
    with pytest.raises(CensusError, match="empty subpopulation"):
        weights(table, Selector.make(g="a", h="y"))  # only zero-count cells


def test_table_invariants(small_schema):
    with pytest.raises(CensusError):
        _table(small_schema, [1, 2, 3])  # wrong length
    with pytest.raises(CensusError):
        _table(small_schema, [1, 2, 3, 4, 5, -1])
    with pytest.raises(CensusError):
        _table(small_schema, [0] * 6)


def test_csv_round_trip(tmp_path, schema):
    rng = np.random.default_rng(3)
    counts = rng.integers(0, 5000, schema.n_cells)
    counts[0] = 0
    table = CensusCellTable(schema=schema, counts=counts)
    path = tmp_path / "census.csv"
    write_census_csv(table, path)
    header = path.read_text().splitlines()[0]
    assert header == "region,location_type,gender,age,education,count"
    full = load_census_csv(path, schema)
    assert np.array_equal(full.counts, table.counts)
    assert full.total == counts.sum()
    # dropping a row exercises the fill-with-zero rule
    lines = path.read_text().splitlines()
    dropped = int(lines[1].rsplit(",", 1)[1])
    (tmp_path / "short.csv").write_text("\n".join(lines[:1] + lines[2:]) + "\n")
    with pytest.warns(UserWarning, match="missing"):
        loaded = load_census_csv(tmp_path / "short.csv", schema)
    assert loaded.total == counts.sum() - dropped


def test_csv_errors(tmp_path, two_level_schema):
    p = tmp_path / "bad_header.csv"
    p.write_text("g,count,extra\na,1,2\n")
    with pytest.raises(CensusError, match="header"):
        load_census_csv(p, two_level_schema)
    p2 = tmp_path / "dup.csv"
    p2.write_text("g,count\na,1\na,2\nb,3\n")
    with pytest.raises(CensusError, match="duplicate"):
        load_census_csv(p2, two_level_schema)
    p3 = tmp_path / "unknown.csv"
    p3.write_text("g,count\na,1\nq,2\n")
    with pytest.raises(CensusError, match="unknown level"):
        load_census_csv(p3, two_level_schema)
    p4 = tmp_path / "neg.csv"
    p4.write_text("g,count\na,-1\nb,2\n")
    with pytest.raises(CensusError, match="negative"):
        load_census_csv(p4, two_level_schema)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(min_value=0, max_value=1000), min_size=6, max_size=6))
def test_weights_property(counts):
    schema = CategoricalSchema(
        factors=(FactorDef("g", ("a", "b"), False), FactorDef("h", ("x", "y", "z"), False))
    )
    if sum(counts) == 0:
        return
    table = CensusCellTable(schema=schema, counts=np.array(counts))
    ids, w = weights(table, Selector.all())
    assert abs(w.sum() - 1.0) < 1e-12
    assert np.all(w > 0)
    assert np.all(table.counts[ids] > 0)
