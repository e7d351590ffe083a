import numpy as np
import pytest
from hypothesis import given, strategies as st

from mrpinfer.errors import SchemaError
from mrpinfer.schema import (
    CategoricalSchema,
    FactorDef,
    Selector,
    neighbours,
    parse_schema,
)


def test_default_schema_shape(schema):
    assert len(schema.factors) == 5
    assert schema.n_levels_total == 21
    assert schema.n_cells == 700
    assert len(schema.nodes) == 6


def test_default_schema_factor_sizes(schema):
    sizes = {f.name: f.n_levels for f in schema.factors}
    assert sizes == {"gender": 2, "region": 7, "age": 5, "education": 5, "area": 2}
    assert schema.factor("age").ordinal and schema.factor("education").ordinal
    assert not schema.factor("gender").ordinal


def test_degenerate_schema_single_cell():
    s = CategoricalSchema(factors=(FactorDef("only", ("a",), False),))
    assert s.n_cells == 1
    assert s.n_levels_total == 1


def test_disconnected_adjacency_rejected():
    text = """
factor region nominal: a, b, c
spatial region: a-b
fold region: c->c
"""
    with pytest.raises(SchemaError, match="disconnected"):
        parse_schema(text)


def test_hrodna_neighbours(schema):
    nbrs, d = neighbours(schema, "hrodna")
    assert nbrs == frozenset({"minsk", "brest", "vitsebsk"})
    assert d == 3


def test_every_node_connected(schema):
    for node in schema.nodes:
        _, d = neighbours(schema, node)
        assert d >= 1


def test_minsk_degree_against_map_audit(schema):
    # Manual audit of the 6-region map: Minsk region touches all five others.
    nbrs, d = neighbours(schema, "minsk")
    assert d == 5
    assert nbrs == frozenset({"brest", "hrodna", "vitsebsk", "mahiliou", "homel"})


def test_unknown_node_error(schema):
    with pytest.raises(SchemaError):
        neighbours(schema, "warsaw")


def test_adjacency_symmetry_and_degree_sum(schema):
    total = 0
    for a in schema.nodes:
        nbrs_a, d = neighbours(schema, a)
        total += d
        for b in nbrs_a:
            nbrs_b, _ = neighbours(schema, b)
            assert a in nbrs_b
    assert total == 2 * len(schema.edges)


def test_cell_id_row_major(schema):
    first = dict(zip(schema.factor_names, [f.levels[0] for f in schema.factors]))
    assert schema.cell_id(first) == 0
    last = dict(zip(schema.factor_names, [f.levels[-1] for f in schema.factors]))
    assert schema.cell_id(last) == 699


@given(st.integers(min_value=0, max_value=699))
def test_cell_id_round_trip(cid):
    from mrpinfer.schema import default_schema

    s = default_schema()
    assert s.cell_id(s.cell_levels(cid)) == cid


def test_cell_levels_out_of_range(schema):
    with pytest.raises(SchemaError):
        schema.cell_levels(700)


def test_level_index_matrix_consistent(schema):
    idx = schema.level_index_matrix()
    for cid in (0, 137, 699):
        levels = schema.cell_levels(cid)
        for j, f in enumerate(schema.factors):
            assert f.levels[idx[cid, j]] == levels[j]


def test_minsk_city_folds_to_minsk(schema):
    cid = schema.cell_id(
        {"gender": "male", "region": "minsk_city", "age": "18-30",
         "education": "higher", "area": "urban"}
    )
    assert schema.node_of_cell(cid) == "minsk"


def test_parse_errors():
    with pytest.raises(SchemaError):
        parse_schema("factor g nominal: a, a\n")
    with pytest.raises(SchemaError):
        parse_schema("factor g weird: a, b\n")
    with pytest.raises(SchemaError):
        parse_schema("wibble g: a, b\n")
    with pytest.raises(SchemaError):
        parse_schema("factor age ordinal: one\n")
    with pytest.raises(SchemaError, match="self-loop"):
        parse_schema("factor r nominal: a, b\nspatial r: a-a, a-b\n")


def test_selector_all_and_single(schema):
    assert Selector.all().mask(schema).sum() == 700
    mask = Selector.make(gender="female").mask(schema)
    assert mask.sum() == 350
    combo = Selector.make(
        age="18-30",
        gender="female",
        education=[l for l in schema.factor("education").levels if l != "higher"],
    )
    assert combo.mask(schema).sum() == 1 * 1 * 4 * 7 * 2


def test_selector_unknown_level(schema):
    with pytest.raises(SchemaError):
        Selector.make(gender="other").mask(schema)
