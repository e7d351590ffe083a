"""Run configuration: a small `key = value` text format, overridable by flags.

Runs reference several files (schema, surveys, census, officials), so the
batch front-end reads one config file and lets command-line flags override
individual keys.  All randomness flows from the single `seed` via named
substreams.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .ingest import EVENTS

_LIST_KEYS = ("events", "variants")


@dataclass(frozen=True)
class RunConfig:
    schema: str | None = None  # None -> bundled default schema
    viber_csv: str | None = None
    street_csv: str | None = None
    census_csv: str | None = None
    officials: str | None = None
    column_map: str | None = None
    model_spec: str | None = None
    outdir: str = "out"
    seed: int = 20200809
    draws: int = 4000
    grid: str = "grid"
    grid_max_points: int = 81
    grid_threshold: float = 6.0
    mbrier_alpha: float = 0.975
    inclusion: str = "shared"
    events: tuple[str, ...] = EVENTS
    variants: tuple[str, ...] = ("I",)
    report_variant: str | None = None
    kmax: int = 7
    em_restarts: int = 10
    n_viber: int = 20000
    n_street: int = 1000
    viber_channel: str = "viber_like"
    street_channel: str = "street_like"

    def validate(self) -> "RunConfig":
        for event in self.events:
            if event not in EVENTS:
                raise ConfigError(f"unknown event name {event!r}")
        for v in self.variants:
            if v not in ("I", "II", "III"):
                raise ConfigError(f"unknown model variant {v!r}")
        if self.grid not in ("grid", "eb"):
            raise ConfigError(f"grid strategy must be grid|eb, got {self.grid!r}")
        if self.inclusion not in ("shared", "per_event"):
            raise ConfigError(f"inclusion must be shared|per_event, got {self.inclusion!r}")
        if not 0.5 < self.mbrier_alpha < 1.0:
            raise ConfigError("mbrier_alpha must lie in (0.5, 1)")
        if self.draws < 1 or self.kmax < 1 or self.grid_max_points < 1:
            raise ConfigError("draws, kmax and grid_max_points must be positive")
        rv = self.report_variant or self.variants[0]
        if rv not in self.variants:
            raise ConfigError(f"report_variant {rv!r} is not among the run variants")
        return replace(self, report_variant=rv)

    def hash(self) -> str:
        text = "\n".join(f"{f.name}={getattr(self, f.name)!r}" for f in fields(self))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


def _coerce(name: str, raw: str, target_type):
    raw = raw.strip()
    if name in _LIST_KEYS:
        if raw == "all" and name == "events":
            return EVENTS
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    if target_type is int or target_type == "int":
        return int(raw)
    if target_type is float or target_type == "float":
        return float(raw)
    return raw


def parse_config(text: str) -> dict:
    """Parse `key = value` lines into an override dict."""
    field_types = {f.name: f.type for f in fields(RunConfig)}
    int_keys = {
        "seed", "draws", "grid_max_points", "kmax", "em_restarts", "n_viber", "n_street"
    }
    float_keys = {"grid_threshold", "mbrier_alpha"}
    out: dict = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"bad config line {raw!r} (expected key = value)")
        if key not in field_types:
            raise ConfigError(f"unknown config key {key!r}")
        typ = int if key in int_keys else float if key in float_keys else str
        try:
            out[key] = _coerce(key, value, typ)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value.strip()!r}") from exc
    return out


def load_config(path: str | None, overrides: dict) -> RunConfig:
    values: dict = {}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_config(p.read_text(encoding="utf-8")))
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        cfg = RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.validate()
