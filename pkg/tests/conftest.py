import numpy as np
import pytest

from mrpinfer.lgm import ModelSpec
from mrpinfer.schema import CategoricalSchema, FactorDef, default_schema


@pytest.fixture(scope="session")
def schema():
    return default_schema()


@pytest.fixture(scope="session")
def tiny_schema():
    """One factor, one level: a single cell, intercept-only designs."""
    return CategoricalSchema(factors=(FactorDef("only", ("a",), False),))


@pytest.fixture(scope="session")
def two_level_schema():
    return CategoricalSchema(factors=(FactorDef("g", ("a", "b"), False),))


def intercept_only_spec(fixed_tau: float = 1.0) -> ModelSpec:
    return ModelSpec(
        event="test",
        intercept=True,
        structures=(("only", "none"),),
        spatial=False,
        fixed=(("log_tau_pr", float(np.log(fixed_tau))),),
    )
