"""Census cell counts and poststratification weights.

The census table stores one non-negative population count per schema cell.
Weights for a subpopulation are the counts renormalized over the selected
cells.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import CensusError
from .schema import CategoricalSchema, Selector

# Documented header contract.  ``location_type`` is the on-disk name of the
# ``area`` factor; the spatial factor comes first, then ``location_type``,
# then the remaining factors in schema order, then ``count``; for the default
# schema this is exactly region,location_type,gender,age,education,count.
AREA_COLUMN = "location_type"
COUNT_COLUMN = "count"


def census_columns(schema: CategoricalSchema) -> list[str]:
    head = []
    if schema.spatial_factor is not None:
        head.append(schema.spatial_factor)
    if "area" in schema.factor_names:
        head.append("area")
    rest = [n for n in schema.factor_names if n not in head]
    return [AREA_COLUMN if n == "area" else n for n in head + rest] + [COUNT_COLUMN]


@dataclass(frozen=True)
class CensusCellTable:
    """Population count N_j for every cell of the schema (zeros allowed)."""

    schema: CategoricalSchema
    counts: np.ndarray  # (P,) int64

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.shape != (self.schema.n_cells,):
            raise CensusError("counts must cover every schema cell exactly once")
        if np.any(counts < 0):
            raise CensusError("negative census count")
        if counts.sum() <= 0:
            raise CensusError("total census population must be positive")
        object.__setattr__(self, "counts", counts.astype(np.int64))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def load_census_csv(path, schema: CategoricalSchema) -> CensusCellTable:
    """Load the census CSV (header: region,location_type,gender,age,education,count).

    Header order for the default schema follows the documented contract:
    one column per factor (``area`` spelled ``location_type``) plus ``count``.
    Cells absent from the file get N_j = 0 with a warning; duplicates,
    unknown levels and negative counts are errors.
    """
    try:
        df = pd.read_csv(path, dtype=str)
    except Exception as exc:
        raise CensusError(f"cannot read census file {path}: {exc}") from exc
    expected = census_columns(schema)
    if list(df.columns) != expected:
        raise CensusError(
            f"census header mismatch: expected {expected}, got {list(df.columns)}"
        )
    counts = np.zeros(schema.n_cells, dtype=np.int64)
    seen = np.zeros(schema.n_cells, dtype=bool)
    for row in df.itertuples(index=False):
        rec = dict(zip(df.columns, row))
        levels = {}
        for f in schema.factor_names:
            col = AREA_COLUMN if f == "area" else f
            level = rec[col]
            if level not in schema.factor(f).levels:
                raise CensusError(f"unknown level {level!r} for factor {f!r}")
            levels[f] = level
        cid = schema.cell_id(levels)
        if seen[cid]:
            raise CensusError(f"duplicate census cell {tuple(levels.values())}")
        seen[cid] = True
        try:
            n = int(rec[COUNT_COLUMN])
        except (TypeError, ValueError) as exc:
            raise CensusError(f"bad count {rec[COUNT_COLUMN]!r}") from exc
        if n < 0:
            raise CensusError(f"negative count for cell {tuple(levels.values())}")
        counts[cid] = n
    n_missing = int((~seen).sum())
    if n_missing:
        warnings.warn(f"{n_missing} census cells missing from file; filled with 0")
    return CensusCellTable(schema=schema, counts=counts)


def write_census_csv(table: CensusCellTable, path) -> None:
    """Emit the table in the exact format load_census_csv consumes."""
    schema = table.schema
    rows = []
    for cid, levels in enumerate(schema.all_cells()):
        rec = dict(zip(schema.factor_names, levels))
        rows.append(
            {
                (AREA_COLUMN if f == "area" else f): rec[f]
                for f in schema.factor_names
            }
            | {COUNT_COLUMN: int(table.counts[cid])}
        )
    pd.DataFrame(rows, columns=census_columns(schema)).to_csv(path, index=False)


def weights(table: CensusCellTable, selector: Selector) -> tuple[np.ndarray, np.ndarray]:
    """Poststratification weights w_j = N_j / sum(N over selected cells).

    Returns ``(cell_ids, w)`` over the selected cells with N_j > 0;
    w sums to 1.  Raises CensusError on an empty subpopulation.
    """
    mask = selector.mask(table.schema) & (table.counts > 0)
    ids = np.flatnonzero(mask)
    if ids.size == 0:
        raise CensusError(f"empty subpopulation: {selector.describe()}")
    n = table.counts[ids].astype(float)
    return ids, n / n.sum()
