"""Poststratification of posterior cell draws to population estimands.

Each posterior draw of the cell probabilities is averaged with census
weights, so the full posterior uncertainty propagates into the estimand; the
summary table reports mean, mode, median and the paired tail quantiles
covering the 90/95/99/99.9% equal-tailed credible intervals.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .census import CensusCellTable, weights
from .errors import EngineError
from .schema import CategoricalSchema, Selector

QUANTILE_LEVELS = (0.05, 0.95, 0.025, 0.975, 0.005, 0.995, 0.0005, 0.9995)
QUANTILE_COLUMNS = tuple(f"q{q}" for q in QUANTILE_LEVELS)

# Central credible intervals checked by the flagging convention, widest last.
FLAG_INTERVALS = (
    (">90%", 0.05, 0.95),
    (">95%", 0.025, 0.975),
    (">99%", 0.005, 0.995),
    (">99.9%", 0.0005, 0.9995),
)
FLAG_STARS = {"inside": "", ">90%": ".", ">95%": "*", ">99%": "**", ">99.9%": "***"}

REPORT_COLUMNS = (
    "Event",
    "Official",
    "Mean",
    "Mode",
    "Median",
    "q0.05",
    "q0.95",
    "q0.025",
    "q0.975",
    "q0.005",
    "q0.995",
    "q0.0005",
    "q0.9995",
    "Flag",
    "Stars",
)


def poststratify(draws: np.ndarray, census: CensusCellTable, selector: Selector) -> np.ndarray:
    """Per-draw weighted average over the selected cells: an S-vector of theta."""
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[1] != census.schema.n_cells:
        raise EngineError("draws must be (S, P) over the census schema cells")
    ids, w = weights(census, selector)
    return draws[:, ids] @ w


@dataclass(frozen=True)
class EstimandSummary:
    selector: str
    mean: float
    mode: float
    median: float
    quantiles: dict[float, float]
    n_draws: int

    def quantile(self, level: float) -> float:
        return self.quantiles[level]


def _histogram_mode(theta: np.ndarray) -> float:
    # Freedman-Diaconis binning; argmax bin midpoint, first bin on ties.
    q75, q25 = np.quantile(theta, [0.75, 0.25])
    iqr = q75 - q25
    if iqr <= 0:
        return float(np.median(theta))
    width = 2.0 * iqr / len(theta) ** (1.0 / 3.0)
    lo, hi = float(theta.min()), float(theta.max())
    n_bins = max(1, int(np.ceil((hi - lo) / width)))
    counts, edges = np.histogram(theta, bins=n_bins, range=(lo, hi))
    k = int(np.argmax(counts))
    return float(0.5 * (edges[k] + edges[k + 1]))


def summarize(theta: np.ndarray, selector: str = "population") -> EstimandSummary:
    """Empirical summary of poststratified draws (type-7 quantiles)."""
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size < 1:
        raise EngineError("need a non-empty draw vector")
    s = theta.size
    smallest = min(min(q, 1.0 - q) for q in QUANTILE_LEVELS)
    if s * smallest < 1.0:
        warnings.warn(
            f"{s} draws is thin for the extreme quantile {smallest}; "
            "tail estimates will be noisy"
        )
    qs = np.quantile(theta, QUANTILE_LEVELS)  # linear interpolation = type 7
    return EstimandSummary(
        selector=selector,
        mean=float(theta.mean()),
        mode=_histogram_mode(theta),
        median=float(np.median(theta)),
        quantiles=dict(zip(QUANTILE_LEVELS, qs.tolist())),
        n_draws=s,
    )


def flag_official(summary: EstimandSummary, official: float) -> str:
    """Smallest listed central interval that excludes the official value.

    Intervals are closed: a value exactly on a quantile boundary counts as
    inside.  Returns "inside" or one of ">90%", ">95%", ">99%", ">99.9%".
    """
    if not 0.0 <= official <= 1.0:
        raise EngineError("official value must lie in [0, 1]")
    flag = "inside"
    for name, lo, hi in FLAG_INTERVALS:
        if summary.quantiles[lo] <= official <= summary.quantiles[hi]:
            break
        flag = name
    return flag


def marginal_panels(
    draws: np.ndarray, census: CensusCellTable, schema: CategoricalSchema
) -> list[tuple[str, str, EstimandSummary]]:
    """One summary per factor level (the marginal subpopulation panels)."""
    out = []
    for f in schema.factors:
        for level in f.levels:
            selector = Selector.make(**{f.name: level})
            theta = poststratify(draws, census, selector)
            out.append((f.name, level, summarize(theta, selector.describe())))
    return out


def report_row(event: str, summary: EstimandSummary, official: float) -> dict:
    flag = flag_official(summary, official)
    row = {
        "Event": event,
        "Official": official,
        "Mean": summary.mean,
        "Mode": summary.mode,
        "Median": summary.median,
    }
    for level, col in zip(QUANTILE_LEVELS, QUANTILE_COLUMNS):
        row[col] = summary.quantiles[level]
    row["Flag"] = flag
    row["Stars"] = FLAG_STARS[flag]
    return row


def population_report(
    results_by_event: dict,
    census: CensusCellTable,
    officials: dict[str, float],
) -> pd.DataFrame:
    """Population-level table (documented column set, star convention included)."""
    rows = []
    for event, result in results_by_event.items():
        theta = poststratify(result.draws, census, Selector.all())
        summary = summarize(theta)
        if event not in officials:
            raise EngineError(f"no official value for event {event!r}")
        rows.append(report_row(event, summary, officials[event]))
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def panels_report(results_by_event: dict, census: CensusCellTable, schema) -> pd.DataFrame:
    """Marginal-subpopulation summaries for every event (plot-ready CSV)."""
    rows = []
    for event, result in results_by_event.items():
        for factor, level, summary in marginal_panels(result.draws, census, schema):
            row = {
                "Event": event,
                "Factor": factor,
                "Level": level,
                "Mean": summary.mean,
                "Mode": summary.mode,
                "Median": summary.median,
            }
            for lv, col in zip(QUANTILE_LEVELS, QUANTILE_COLUMNS):
                row[col] = summary.quantiles[lv]
            rows.append(row)
    return pd.DataFrame(rows)
