"""Exception hierarchy. ConfigError maps to CLI exit code 2, EngineError to 1."""


class EngineError(Exception):
    """Runtime failure inside the pipeline (exit code 1)."""


class ConfigError(Exception):
    """Invalid configuration or input contract violation (exit code 2)."""


class SchemaError(ConfigError):
    """Malformed or inconsistent schema file."""


class IngestError(EngineError):
    """Survey CSV cannot be read or has unknown columns."""


class CensusError(EngineError):
    """Census table violates its contract (unknown level, duplicate, negative)."""


class ModelError(ConfigError):
    """Model specification is inconsistent with the schema."""


class NonConvergenceError(EngineError):
    """Newton-Raphson or mode search failed to converge."""
