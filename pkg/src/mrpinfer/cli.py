"""Batch front-end: ingest -> fit -> score -> poststratify -> cluster -> report.

Subcommands: simulate, fit, scores, report, cluster.  Every command reads
one config file (flags override keys), writes CSV artifacts plus a
run-manifest into the output directory, and is byte-identical across reruns
with the same config and seed.  Exit codes: 0 success, 1 runtime failure,
2 config/validation error.  MRPINFER_JOBS controls worker processes for
fitting (default serial).
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .census import load_census_csv, write_census_csv
from .cluster import class_data_from_records, cluster_profiles, select_k
from .config import RunConfig, load_config
from .criteria import score_result, scores_frame
from .errors import ConfigError, EngineError
from .inference import CellLikelihood, InferenceConfig, PosteriorResult, fit_event
from .ingest import (
    EVENTS,
    load_column_map,
    merge_and_split,
    parse_survey_csv,
    response_vector,
    write_survey_csv,
)
from .lgm import parse_model_spec, variant_spec
from .poststrat import panels_report, population_report
from .rng import subseed
from .schema import default_schema, load_schema
from .synthgen import CHANNEL_PRESETS, SynthSettings, biased_sample, generate_truth, truth_frame


def _jobs() -> int:
    try:
        return max(1, int(os.environ.get("MRPINFER_JOBS", "1")))
    except ValueError:
        return 1


def _load_schema(cfg: RunConfig):
    if cfg.schema is None:
        return default_schema()
    return load_schema(cfg.schema)


def _require(cfg: RunConfig, *keys: str):
    for key in keys:
        path = getattr(cfg, key)
        if path is None:
            raise ConfigError(f"config key {key!r} is required for this command")
        if not Path(path).exists():
            raise ConfigError(f"{key} file not found: {path}")


def _write_manifest(cfg: RunConfig, outdir: Path):
    versions = f"mrpinfer {__version__}; numpy {np.__version__}; pandas {pd.__version__}"
    text = f"config_hash: {cfg.hash()}\nseed: {cfg.seed}\nversions: {versions}\n"
    (outdir / "manifest.txt").write_text(text, encoding="utf-8")


def _ingest(cfg: RunConfig, schema):
    _require(cfg, "viber_csv", "street_csv")
    column_map = load_column_map(cfg.column_map) if cfg.column_map else None
    viber, viber_report = parse_survey_csv(cfg.viber_csv, "viber", schema, column_map=column_map)
    street, street_report = parse_survey_csv(
        cfg.street_csv, "street", schema, column_map=column_map
    )
    train, holdout = merge_and_split(viber, street, cfg.seed)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    viber_report.to_frame().to_csv(outdir / "rejections_viber.csv", index=False)
    street_report.to_frame().to_csv(outdir / "rejections_street.csv", index=False)
    return train, holdout


def _event_cells(dataset, event, schema, inclusion) -> CellLikelihood:
    y, cids = response_vector(dataset, event, schema, inclusion=inclusion)
    return CellLikelihood.from_rows(y, cids, schema.n_cells)


def _model_spec(cfg: RunConfig, variant: str, event: str, schema):
    if cfg.model_spec:
        text = Path(cfg.model_spec).read_text(encoding="utf-8")
        base = parse_model_spec(text, default_event=event)
        from dataclasses import replace

        return replace(base, event=event)
    return variant_spec(variant, event, schema)


def _inference_config(cfg: RunConfig) -> InferenceConfig:
    return InferenceConfig(
        grid_max_points=cfg.grid_max_points, grid_threshold=cfg.grid_threshold
    )


def _fit_one(payload):
    schema, spec, cells, cfg_draws, seed, strategy, inf_cfg, outdir, stem = payload
    result = fit_event(
        schema, spec, cells, n_draws=cfg_draws, seed=seed, strategy=strategy, config=inf_cfg
    )
    result.save(outdir, stem)
    return stem, result.mlik


def cmd_fit(cfg: RunConfig) -> int:
    schema = _load_schema(cfg)
    train, _ = _ingest(cfg, schema)
    outdir = Path(cfg.outdir)
    inf_cfg = _inference_config(cfg)
    tasks = []
    for event in cfg.events:
        cells = _event_cells(train, event, schema, cfg.inclusion)
        if cells.m == 0:
            raise EngineError(f"no retained rows for event {event!r}")
        for variant in cfg.variants:
            spec = _model_spec(cfg, variant, event, schema)
            tasks.append(
                (schema, spec, cells, cfg.draws, cfg.seed, cfg.grid, inf_cfg, outdir, f"{event}_{variant}")
            )
    jobs = _jobs()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            done = list(pool.map(_fit_one, tasks))
    else:
        done = [_fit_one(t) for t in tasks]
    for stem, ml in sorted(done):
        print(f"fitted {stem}: mlik={ml:.4f}")
    _write_manifest(cfg, outdir)
    return 0


def cmd_scores(cfg: RunConfig) -> int:
    schema = _load_schema(cfg)
    train, holdout = _ingest(cfg, schema)
    outdir = Path(cfg.outdir)
    reports = []
    for event in cfg.events:
        train_cells = _event_cells(train, event, schema, cfg.inclusion)
        holdout_cells = _event_cells(holdout, event, schema, cfg.inclusion)
        for variant in cfg.variants:
            stem = f"{event}_{variant}"
            if not (outdir / f"{stem}.meta.csv").exists():
                raise EngineError(f"missing fit artifact {stem}; run fit first")
            result = PosteriorResult.load(outdir, stem)
            reports.append(
                score_result(result, train_cells, holdout_cells, alpha=cfg.mbrier_alpha)
            )
    frame = scores_frame(reports)
    frame.to_csv(outdir / "scores.csv", index=False, float_format="%.10g")
    print(frame.to_string(index=False))
    _write_manifest(cfg, outdir)
    return 0


def _load_officials(path) -> dict[str, float]:
    df = pd.read_csv(path)
    if not {"event", "official"} <= set(df.columns):
        raise ConfigError("officials file needs columns event,official")
    return {str(r.event): float(r.official) for r in df.itertuples(index=False)}


def cmd_report(cfg: RunConfig) -> int:
    schema = _load_schema(cfg)
    _require(cfg, "census_csv", "officials")
    census = load_census_csv(cfg.census_csv, schema)
    officials = _load_officials(cfg.officials)
    outdir = Path(cfg.outdir)
    results = {}
    for event in cfg.events:
        stem = f"{event}_{cfg.report_variant}"
        if not (outdir / f"{stem}.meta.csv").exists():
            raise EngineError(f"missing fit artifact {stem}; run fit first")
        results[event] = PosteriorResult.load(outdir, stem)
    table = population_report(results, census, officials)
    table.to_csv(outdir / "population_summary.csv", index=False, float_format="%.6f")
    panels = panels_report(results, census, schema)
    panels.to_csv(outdir / "marginal_panels.csv", index=False, float_format="%.6f")
    print(table.to_string(index=False))
    _write_manifest(cfg, outdir)
    return 0


def cmd_cluster(cfg: RunConfig) -> int:
    schema = _load_schema(cfg)
    train, _ = _ingest(cfg, schema)
    _require(cfg, "census_csv")
    census = load_census_csv(cfg.census_csv, schema)
    outdir = Path(cfg.outdir)
    data = class_data_from_records(train.records, schema)
    cluster_seed = subseed(cfg.seed, "clustering")
    best_k, models = select_k(data, cfg.kmax, cluster_seed, restarts=cfg.em_restarts)
    bic_rows = [
        {"k": m.k, "loglik": m.loglik, "bic": m.bic, "n_iter": m.n_iter} for m in models
    ]
    pd.DataFrame(bic_rows).to_csv(outdir / "cluster_bic.csv", index=False, float_format="%.10g")
    model = models[best_k - 1]
    draws_by_event = {}
    for event in cfg.events:
        stem = f"{event}_{cfg.report_variant}"
        if (outdir / f"{stem}.meta.csv").exists():
            draws_by_event[event] = PosteriorResult.load(outdir, stem).draws
    profiles = cluster_profiles(model, census, schema, draws_by_event or None)
    out = profiles.factor_profiles.copy()
    out.insert(1, "cluster_size", out["cluster"].map(
        {k + 1: profiles.sizes[k] for k in range(model.k)}
    ))
    out.to_csv(outdir / "cluster_profiles.csv", index=False, float_format="%.8g")
    if profiles.support is not None:
        profiles.support.to_csv(outdir / "cluster_support.csv", index=False, float_format="%.8g")
    print(f"selected k={best_k} (BIC {model.bic:.2f}); sizes: "
          + ", ".join(f"{s:.3f}" for s in profiles.sizes))
    _write_manifest(cfg, outdir)
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    schema = _load_schema(cfg)
    outdir = Path(cfg.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    if cfg.viber_channel not in CHANNEL_PRESETS or cfg.street_channel not in CHANNEL_PRESETS:
        raise ConfigError(
            f"channel presets must be one of {sorted(CHANNEL_PRESETS)}"
        )
    truth = generate_truth(schema, subseed(cfg.seed, "synthgen", "truth"))
    viber = biased_sample(
        truth, CHANNEL_PRESETS[cfg.viber_channel], cfg.n_viber,
        subseed(cfg.seed, "synthgen", "viber"), source="viber",
    )
    street = biased_sample(
        truth, CHANNEL_PRESETS[cfg.street_channel], cfg.n_street,
        subseed(cfg.seed, "synthgen", "street"), source="street",
    )
    write_survey_csv(viber, outdir / "viber.csv")
    write_survey_csv(street, outdir / "street.csv")
    write_census_csv(truth.census, outdir / "census.csv")
    truth_frame(truth).to_csv(outdir / "truth.csv", index=False, float_format="%.10g")
    officials = pd.DataFrame(
        {"event": list(EVENTS), "official": [truth.population_truth(e) for e in EVENTS]}
    )
    officials.to_csv(outdir / "officials_true.csv", index=False, float_format="%.10g")
    print(f"simulated corpus in {outdir}: {len(viber)} viber rows, {len(street)} street rows")
    _write_manifest(cfg, outdir)
    return 0


COMMANDS = {
    "fit": cmd_fit,
    "scores": cmd_scores,
    "report": cmd_report,
    "cluster": cmd_cluster,
    "simulate": cmd_simulate,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mrpinfer",
        description="Survey inference engine: multilevel regression with poststratification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="run config file (key = value lines)")
        p.add_argument("--schema", default=None)
        p.add_argument("--viber-csv", dest="viber_csv", default=None)
        p.add_argument("--street-csv", dest="street_csv", default=None)
        p.add_argument("--census-csv", dest="census_csv", default=None)
        p.add_argument("--officials", default=None)
        p.add_argument("--column-map", dest="column_map", default=None)
        p.add_argument("--model-spec", dest="model_spec", default=None)
        p.add_argument("--outdir", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--draws", type=int, default=None)
        p.add_argument("--grid", default=None, choices=("grid", "eb"))
        p.add_argument("--grid-max-points", dest="grid_max_points", type=int, default=None)
        p.add_argument("--mbrier-alpha", dest="mbrier_alpha", type=float, default=None)
        p.add_argument("--inclusion", default=None, choices=("shared", "per_event"))
        p.add_argument("--events", default=None, help="comma-separated list or 'all'")
        p.add_argument("--variants", default=None, help="comma-separated subset of I,II,III")
        p.add_argument("--report-variant", dest="report_variant", default=None)
        p.add_argument("--kmax", type=int, default=None)
        p.add_argument("--n-viber", dest="n_viber", type=int, default=None)
        p.add_argument("--n-street", dest="n_street", type=int, default=None)
        p.add_argument("--viber-channel", dest="viber_channel", default=None)
        p.add_argument("--street-channel", dest="street_channel", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        k: v
        for k, v in vars(args).items()
        if k not in ("command", "config") and v is not None
    }
    for key in ("events", "variants"):
        if key in overrides:
            raw = overrides[key]
            overrides[key] = EVENTS if raw == "all" else tuple(
                v.strip() for v in raw.split(",") if v.strip()
            )
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
