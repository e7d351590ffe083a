"""Synthetic populations, ground-truth cell probabilities, and biased samples.

Ground truth is generated straight from the regression model: effects are
drawn from the priors at fixed hyperparameters and pushed through the design
and the inverse logit, giving per-event cell probabilities.  Census counts
follow a configurable log-normal cell-size law.

Because a survey record carries exactly one candidate choice, the six
candidate events are realized as one categorical draw per respondent over
the per-cell normalized candidate probabilities; `cell_probs` therefore
reports candidate marginals after that normalization, while the early-voting
indicator is an independent Bernoulli and stays exactly logit-linear.

Channel bias is a per-cell multiplier on the census sampling weights,
multiplicative across factor-level multipliers.  The "viber_like" preset
over-represents the capital, the 31-40 age band and higher education.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import expit

from .census import CensusCellTable
from .errors import EngineError
from .ingest import CANDIDATE_EVENTS, EVENTS, SurveyRecord
from .lgm import LatentLayout, ModelSpec, trans_from_rho, variant_spec
from .rng import substream
from .schema import CategoricalSchema

DEFAULT_INTERCEPTS = {
    "lukashenka": -1.6,
    "tsikhanouskaya": 1.0,
    "dmitriyeu": -5.2,
    "cherachen": -4.8,
    "kanapatskaya": -6.0,
    "against_all": -2.7,
    "early_voting": -2.1,
}


@dataclass(frozen=True)
class SynthSettings:
    """Fixed hyperparameters and census law for truth generation."""

    tau_pr: float = 4.0
    tau_age: float = 2.0
    rho_age: float = 0.6
    tau_edu: float = 2.0
    rho_edu: float = 0.6
    tau_reg: float = 4.0
    rho_reg: float = 0.5
    intercepts: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_INTERCEPTS))
    census_meanlog: float = 8.8
    census_sdlog: float = 1.0
    events: tuple[str, ...] = EVENTS


@dataclass(frozen=True)
class SyntheticTruth:
    schema: CategoricalSchema
    census: CensusCellTable
    settings: SynthSettings
    effects: Mapping[str, np.ndarray]  # per event: internal latent vector
    raw_probs: Mapping[str, np.ndarray]  # per event: sigmoid of the linear predictor
    marginals: Mapping[str, np.ndarray]  # per event: record-level marginal per cell

    def cell_probs(self, event: str) -> np.ndarray:
        """Per-cell probability that a sampled record realizes the event."""
        if event not in self.marginals:
            raise EngineError(f"unknown event {event!r}")
        return self.marginals[event]

    def population_truth(self, event: str) -> float:
        w = self.census.counts / self.census.counts.sum()
        return float(w @ self.cell_probs(event))


def _internal_lam(layout: LatentLayout, s: SynthSettings) -> np.ndarray:
    values = {
        "log_tau_pr": np.log(s.tau_pr),
        "log_tau_age": np.log(s.tau_age),
        "trho_age": trans_from_rho(s.rho_age),
        "log_tau_education": np.log(s.tau_edu),
        "trho_education": trans_from_rho(s.rho_edu),
        "log_tau_reg": np.log(s.tau_reg),
        "logit_rho_reg": float(np.log(s.rho_reg / (1.0 - s.rho_reg))),
    }
    return np.array([values[name] for name in layout.hyper_names])


def generate_truth(
    schema: CategoricalSchema,
    seed: int,
    settings: SynthSettings | None = None,
) -> SyntheticTruth:
    """Sample per-event effects from the priors at fixed hyperparameters."""
    s = settings or SynthSettings()
    spec = variant_spec("I", "truth", schema)
    layout = LatentLayout(schema, spec)
    lam = _internal_lam(layout, s)
    q, _ = layout.prior_precision(lam)
    cov_chol = np.linalg.cholesky(np.linalg.inv(q))
    a = layout.design(lam)
    rng = substream(seed, "synthgen", "truth")
    effects = {}
    raw = {}
    for event in s.events:
        gamma = cov_chol @ rng.standard_normal(layout.n_latent)
        if event in s.intercepts and spec.intercept:
            gamma[0] = s.intercepts[event]
        effects[event] = gamma
        raw[event] = expit(a @ gamma)
    cand = [e for e in s.events if e in CANDIDATE_EVENTS]
    marginals = dict(raw)
    if cand:
        total = np.sum([raw[e] for e in cand], axis=0)
        for e in cand:
            marginals[e] = raw[e] / total
    counts = np.maximum(
        np.round(rng.lognormal(s.census_meanlog, s.census_sdlog, schema.n_cells)), 1
    ).astype(np.int64)
    census = CensusCellTable(schema=schema, counts=counts)
    return SyntheticTruth(
        schema=schema,
        census=census,
        settings=s,
        effects=effects,
        raw_probs=raw,
        marginals=marginals,
    )


# -- bias channels -------------------------------------------------------------------

ChannelSpec = Mapping[str, Mapping[str, float]]

VIBER_LIKE: ChannelSpec = {
    "region": {"minsk_city": 5.0},
    "age": {"31-40": 5.0},
    "education": {"higher": 5.0},
}
STREET_LIKE: ChannelSpec = {
    "region": {"homel": 2.0},
    "education": {"higher": 2.0},
}
UNBIASED: ChannelSpec = {}

CHANNEL_PRESETS = {"viber_like": VIBER_LIKE, "street_like": STREET_LIKE, "unbiased": UNBIASED}


def cell_multipliers(schema: CategoricalSchema, channel: ChannelSpec) -> np.ndarray:
    """Per-cell sampling multiplier, multiplicative across factor-level entries."""
    mult = np.ones(schema.n_cells)
    idx = schema.level_index_matrix()
    for factor, by_level in channel.items():
        f = schema.factor(factor)
        j = schema.factor_names.index(factor)
        for level, m in by_level.items():
            if m <= 0:
                raise EngineError("channel multipliers must be positive")
            mult[idx[:, j] == f.levels.index(level)] *= m
    return mult


def biased_sample(
    truth: SyntheticTruth,
    channel: ChannelSpec,
    n: int,
    seed: int,
    *,
    source: str = "viber",
) -> list[SurveyRecord]:
    """Draw n respondents from cells with probability ~ N_j x multiplier_j.

    Each respondent gets one candidate choice from the cell's normalized
    candidate distribution and an independent early-voting Bernoulli.
    """
    if n < 0:
        raise EngineError("sample size must be non-negative")
    schema = truth.schema
    rng = substream(seed, "synthgen", "sample", source)
    if n == 0:
        return []
    weights = truth.census.counts.astype(float) * cell_multipliers(schema, channel)
    weights /= weights.sum()
    cell_counts = rng.multinomial(n, weights)
    cand = [e for e in truth.settings.events if e in CANDIDATE_EVENTS]
    cand_probs = np.stack([truth.marginals[e] for e in cand], axis=1) if cand else None
    has_early = "early_voting" in truth.settings.events
    records: list[SurveyRecord] = []
    for cid in np.flatnonzero(cell_counts):
        count = int(cell_counts[cid])
        levels = dict(zip(schema.factor_names, schema.cell_levels(cid)))
        if cand:
            choice_idx = rng.choice(len(cand), size=count, p=cand_probs[cid])
        else:
            choice_idx = np.zeros(count, dtype=int)
        if has_early:
            early = rng.random(count) < truth.marginals["early_voting"][cid]
        else:
            early = np.zeros(count, dtype=bool)
        for i in range(count):
            records.append(
                SurveyRecord(
                    levels=levels,
                    candidate=cand[choice_idx[i]] if cand else "missing",
                    vote_when=("early" if early[i] else "main_day") if has_early else "missing",
                    source=source,
                )
            )
    return records


def truth_frame(truth: SyntheticTruth):
    """Cell-level truth table (cell id, levels, per-event marginals)."""
    import pandas as pd

    schema = truth.schema
    rows = []
    for cid, levels in enumerate(schema.all_cells()):
        row = {"cell": cid}
        row.update(dict(zip(schema.factor_names, levels)))
        row["census_count"] = int(truth.census.counts[cid])
        for event in truth.settings.events:
            row[f"p_{event}"] = truth.marginals[event][cid]
        rows.append(row)
    return pd.DataFrame(rows)
