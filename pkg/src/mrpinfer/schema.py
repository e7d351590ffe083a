"""Categorical factor space, level orderings, and the spatial adjacency graph.

The schema is data, not code: a small line-oriented text format describes the
factors, their ordered levels, the spatial adjacency graph and the folding of
factor levels onto graph nodes.  Everything else in the engine keys off a
loaded :class:`CategoricalSchema`.

Schema file grammar (UTF-8, one directive per line, ``#`` comments allowed)::

    factor <name> <ordinal|nominal>: <level>, <level>, ...
    spatial <factor>: <nodeA>-<nodeB>, <nodeC>-<nodeD>, ...
    fold <factor>: <level>-><node>, <level>-><node>, ...

``spatial`` declares the adjacency edge list of the spatial factor; ``fold``
maps factor levels onto graph nodes (levels without a fold entry must
themselves be node names).  The graph must be connected, without self-loops.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import SchemaError

DEFAULT_SCHEMA_RESOURCE = "belarus_schema.txt"


@dataclass(frozen=True)
class FactorDef:
    name: str
    levels: tuple[str, ...]
    ordinal: bool

    @property
    def n_levels(self) -> int:
        return len(self.levels)


@dataclass(frozen=True)
class CategoricalSchema:
    """Validated factor space plus the spatial graph.

    Immutable after construction; safe to share across threads.
    """

    factors: tuple[FactorDef, ...]
    spatial_factor: str | None = None
    nodes: tuple[str, ...] = ()
    edges: frozenset[tuple[str, str]] = frozenset()
    level_to_node: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        names = [f.name for f in self.factors]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate factor names")
        if not self.factors:
            raise SchemaError("schema needs at least one factor")
        for f in self.factors:
            if not f.levels:
                raise SchemaError(f"factor {f.name!r} has no levels")
            if len(set(f.levels)) != len(f.levels):
                raise SchemaError(f"duplicate level names in factor {f.name!r}")
            if f.ordinal and f.n_levels < 2:
                raise SchemaError(f"ordinal factor {f.name!r} needs >= 2 levels")
        if self.spatial_factor is not None:
            self._validate_graph()

    def _validate_graph(self):
        if self.spatial_factor not in {f.name for f in self.factors}:
            raise SchemaError(f"spatial factor {self.spatial_factor!r} is not a factor")
        if not self.nodes:
            raise SchemaError("spatial graph has no nodes")
        node_set = set(self.nodes)
        for a, b in self.edges:
            if a == b:
                raise SchemaError(f"self-loop on node {a!r}")
            if a not in node_set or b not in node_set:
                raise SchemaError(f"edge {a}-{b} references unknown node")
        for level in self.factor(self.spatial_factor).levels:
            node = self.level_to_node.get(level, level)
            if node not in node_set:
                raise SchemaError(
                    f"level {level!r} of spatial factor maps to unknown node {node!r}"
                )
        # Connectivity by BFS.
        if len(node_set) > 1:
            adj = {n: set() for n in self.nodes}
            for a, b in self.edges:
                adj[a].add(b)
                adj[b].add(a)
            seen = {self.nodes[0]}
            queue = deque([self.nodes[0]])
            while queue:
                cur = queue.popleft()
                for nb in adj[cur]:
                    if nb not in seen:
                        seen.add(nb)
                        queue.append(nb)
            if seen != node_set:
                missing = ", ".join(sorted(node_set - seen))
                raise SchemaError(f"disconnected adjacency graph (unreached: {missing})")

    # -- factor / level lookups -------------------------------------------------

    def factor(self, name: str) -> FactorDef:
        for f in self.factors:
            if f.name == name:
                return f
        raise SchemaError(f"unknown factor {name!r}")

    @property
    def factor_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    @property
    def n_cells(self) -> int:
        out = 1
        for f in self.factors:
            out *= f.n_levels
        return out

    @property
    def n_levels_total(self) -> int:
        return sum(f.n_levels for f in self.factors)

    def level_index(self, factor: str, level: str) -> int:
        f = self.factor(factor)
        try:
            return f.levels.index(level)
        except ValueError:
            raise SchemaError(f"unknown level {level!r} for factor {factor!r}") from None

    # -- cell indexing (row-major over the schema's factor order) ---------------

    def cell_id(self, levels: Sequence[str] | Mapping[str, str]) -> int:
        """Dense ordinal id in [0, P) of a full level combination."""
        if isinstance(levels, Mapping):
            levels = [levels[f.name] for f in self.factors]
        if len(levels) != len(self.factors):
            raise SchemaError("cell needs one level per factor")
        cid = 0
        for f, lvl in zip(self.factors, levels):
            cid = cid * f.n_levels + self.level_index(f.name, lvl)
        return cid

    def cell_levels(self, cid: int) -> tuple[str, ...]:
        """Inverse of :meth:`cell_id`."""
        if not 0 <= cid < self.n_cells:
            raise SchemaError(f"cell id {cid} out of range [0, {self.n_cells})")
        out = []
        for f in reversed(self.factors):
            cid, idx = divmod(cid, f.n_levels)
            out.append(f.levels[idx])
        return tuple(reversed(out))

    def all_cells(self) -> Iterable[tuple[str, ...]]:
        """All level combinations in dense-id order."""
        return itertools.product(*(f.levels for f in self.factors))

    def level_index_matrix(self) -> np.ndarray:
        """(P, n_factors) int matrix: level index of each cell for each factor."""
        P = self.n_cells
        out = np.empty((P, len(self.factors)), dtype=np.int64)
        stride = P
        for j, f in enumerate(self.factors):
            stride //= f.n_levels
            out[:, j] = (np.arange(P) // stride) % f.n_levels
        return out

    # -- spatial graph ----------------------------------------------------------

    def node_of_cell(self, cid: int) -> str:
        if self.spatial_factor is None:
            raise SchemaError("schema has no spatial factor")
        levels = dict(zip(self.factor_names, self.cell_levels(cid)))
        level = levels[self.spatial_factor]
        return self.level_to_node.get(level, level)

    def node_index_per_cell(self) -> np.ndarray:
        """(P,) int array: graph node index of each cell's spatial level."""
        if self.spatial_factor is None:
            raise SchemaError("schema has no spatial factor")
        f = self.factor(self.spatial_factor)
        j = self.factor_names.index(self.spatial_factor)
        node_pos = {n: i for i, n in enumerate(self.nodes)}
        per_level = np.array(
            [node_pos[self.level_to_node.get(lvl, lvl)] for lvl in f.levels]
        )
        return per_level[self.level_index_matrix()[:, j]]


def neighbours(schema: CategoricalSchema, node: str) -> tuple[frozenset[str], int]:
    """First-degree neighbour set and degree of a spatial node."""
    if node not in schema.nodes:
        raise SchemaError(f"unknown spatial node {node!r}")
    out = set()
    for a, b in schema.edges:
        if a == node:
            out.add(b)
        elif b == node:
            out.add(a)
    return frozenset(out), len(out)


# -- subpopulation selectors ---------------------------------------------------


@dataclass(frozen=True)
class Selector:
    """Predicate over factor levels; selects the cells of a subpopulation.

    ``criteria`` maps a factor name to the set of admitted levels; factors not
    mentioned admit every level.  An empty ``criteria`` selects all cells.
    """

    criteria: tuple[tuple[str, frozenset[str]], ...] = ()

    @classmethod
    def make(cls, **levels: str | Iterable[str]) -> "Selector":
        crits = []
        for factor, val in levels.items():
            vals = (val,) if isinstance(val, str) else tuple(val)
            crits.append((factor, frozenset(vals)))
        return cls(tuple(crits))

    @classmethod
    def all(cls) -> "Selector":
        return cls()

    def mask(self, schema: CategoricalSchema) -> np.ndarray:
        """(P,) boolean mask of selected cells."""
        idx = schema.level_index_matrix()
        keep = np.ones(schema.n_cells, dtype=bool)
        for factor, allowed in self.criteria:
            f = schema.factor(factor)
            j = schema.factor_names.index(factor)
            for lvl in allowed:
                if lvl not in f.levels:
                    raise SchemaError(f"unknown level {lvl!r} for factor {factor!r}")
            allowed_idx = {f.levels.index(lvl) for lvl in allowed}
            keep &= np.isin(idx[:, j], sorted(allowed_idx))
        return keep

    def describe(self) -> str:
        if not self.criteria:
            return "population"
        parts = []
        for factor, allowed in self.criteria:
            parts.append(f"{factor}={'|'.join(sorted(allowed))}")
        return " & ".join(parts)


# -- schema file parsing ---------------------------------------------------------


def _split_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def parse_schema(text: str) -> CategoricalSchema:
    """Parse the schema text format; raises SchemaError on any violation."""
    factors: list[FactorDef] = []
    spatial_factor = None
    edges: set[tuple[str, str]] = set()
    fold: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            head, _, rest = line.partition(":")
            words = head.split()
            if words[0] == "factor":
                _, name, kind = words
                if kind not in ("ordinal", "nominal"):
                    raise SchemaError(f"factor kind must be ordinal|nominal, got {kind!r}")
                factors.append(FactorDef(name, tuple(_split_list(rest)), kind == "ordinal"))
            elif words[0] == "spatial":
                _, spatial_factor = words
                for item in _split_list(rest):
                    a, _, b = item.partition("-")
                    a, b = a.strip(), b.strip()
                    if not a or not b:
                        raise SchemaError(f"bad edge {item!r}")
                    edges.add((a, b) if a <= b else (b, a))
            elif words[0] == "fold":
                _, fold_factor = words
                if spatial_factor is not None and fold_factor != spatial_factor:
                    raise SchemaError("fold factor must match the spatial factor")
                for item in _split_list(rest):
                    lvl, _, node = item.partition("->")
                    lvl, node = lvl.strip(), node.strip()
                    if not lvl or not node:
                        raise SchemaError(f"bad fold entry {item!r}")
                    fold[lvl] = node
            else:
                raise SchemaError(f"unknown directive {words[0]!r}")
        except SchemaError:
            raise
        except Exception as exc:
            raise SchemaError(f"line {lineno}: cannot parse {raw!r}") from exc
    nodes: tuple[str, ...] = ()
    if spatial_factor is not None:
        node_set = {n for e in edges for n in e} | set(fold.values())
        nodes = tuple(sorted(node_set))
    return CategoricalSchema(
        factors=tuple(factors),
        spatial_factor=spatial_factor,
        nodes=nodes,
        edges=frozenset(edges),
        level_to_node=dict(fold),
    )


def load_schema(path) -> CategoricalSchema:
    """Load and validate a schema file."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_schema(fh.read())


def default_schema() -> CategoricalSchema:
    """The bundled Belarus schema: 5 factors, 21 levels, 700 cells, 6-node graph."""
    text = (
        resources.files("mrpinfer")
        .joinpath("data")
        .joinpath(DEFAULT_SCHEMA_RESOURCE)
        .read_text("utf-8")
    )
    return parse_schema(text)
