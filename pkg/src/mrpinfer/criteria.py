"""Model-comparison scores: WAIC on training rows, MBRIER on the holdout.

WAIC uses the standard deviance-scale estimator from posterior draws,
-2 * sum_i [ log mean_s p(y_i | p_i^(s)) - var_s log p(y_i | p_i^(s)) ],
with the sample variance over draws as the effective-parameter penalty.

MBRIER^alpha scores each holdout outcome by its squared distance to the
nearest posterior-predictive quantile (levels alpha and 1-alpha of the
predictive probability), weighted by 1 / (1 - width^2) to penalize wide
credible intervals, and averages over the holdout.  The quantiles are the
empirical (type-7 / linear interpolation) quantiles of the same posterior
draws used everywhere else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd

from .errors import EngineError

DEFAULT_MBRIER_ALPHA = 0.975


def waic(p_draws: np.ndarray, y: np.ndarray) -> float:
    """WAIC from an (S, M) matrix of per-row success probabilities.

    Degenerate draw matrices (zero variance) are permitted; their penalty
    term is exactly zero.
    """
    p_draws = np.asarray(p_draws, dtype=float)
    y = np.asarray(y, dtype=float)
    if p_draws.ndim != 2 or p_draws.shape[0] < 2:
        raise EngineError("need an (S, M) draw matrix with S >= 2")
    if p_draws.shape[1] != y.shape[0]:
        raise EngineError("draw matrix and response length differ")
    log_lik = np.where(y > 0.5, np.log(p_draws), np.log1p(-p_draws))
    s = p_draws.shape[0]
    lppd = np.logaddexp.reduce(log_lik, axis=0) - np.log(s)
    penalty = np.var(log_lik, axis=0, ddof=1)
    return float(-2.0 * np.sum(lppd - penalty))


def waic_cells(draws: np.ndarray, n: np.ndarray, s: np.ndarray) -> float:
    """WAIC over rows aggregated by cell (identical to expanding the rows).

    ``draws`` is (S, P); each cell contributes s_j rows with y=1 and
    n_j - s_j rows with y=0, all sharing the cell's draw column.
    """
    draws = np.asarray(draws, dtype=float)
    n = np.asarray(n, dtype=float)
    s = np.asarray(s, dtype=float)
    S = draws.shape[0]
    if S < 2:
        raise EngineError("need S >= 2 draws")
    log_p = np.log(draws)
    log_q = np.log1p(-draws)
    lppd1 = np.logaddexp.reduce(log_p, axis=0) - np.log(S)
    lppd0 = np.logaddexp.reduce(log_q, axis=0) - np.log(S)
    pen1 = np.var(log_p, axis=0, ddof=1)
    pen0 = np.var(log_q, axis=0, ddof=1)
    return float(-2.0 * (s @ (lppd1 - pen1) + (n - s) @ (lppd0 - pen0)))


def mbrier(alpha: float, q_hi: np.ndarray, q_lo: np.ndarray, y: np.ndarray) -> float:
    """Modified quantile Brier score at level alpha over holdout rows.

    ``q_hi`` and ``q_lo`` are the per-row alpha and 1-alpha posterior
    predictive quantiles of the success probability.
    """
    if not 0.5 < alpha < 1.0:
        raise EngineError("alpha must lie in (0.5, 1)")
    q_hi = np.asarray(q_hi, dtype=float)
    q_lo = np.asarray(q_lo, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(q_lo > q_hi):
        raise EngineError("lower quantile exceeds upper quantile")
    if np.any((q_hi < 0) | (q_hi > 1) | (q_lo < 0) | (q_lo > 1)):
        raise EngineError("quantiles must lie in [0, 1]")
    width = q_hi - q_lo
    if np.any(width >= 1.0):
        raise EngineError("degenerate interval: width 1 makes the weight singular")
    weight = 1.0 / (1.0 - width**2)
    dist = np.minimum(np.abs(y - q_hi), np.abs(y - q_lo))
    return float(np.mean(weight * dist**2))


def mbrier_cells(alpha: float, draws: np.ndarray, n: np.ndarray, s: np.ndarray) -> float:
    """MBRIER over holdout rows aggregated by cell.

    Per-cell quantiles are computed once from the draw columns; each cell
    contributes s_j rows with y=1 and n_j - s_j rows with y=0.
    """
    if not 0.5 < alpha < 1.0:
        raise EngineError("alpha must lie in (0.5, 1)")
    n = np.asarray(n, dtype=float)
    s = np.asarray(s, dtype=float)
    active = n > 0
    if not np.any(active):
        raise EngineError("holdout is empty")
    q_lo, q_hi = np.quantile(draws[:, active], [1.0 - alpha, alpha], axis=0)
    width = q_hi - q_lo
    if np.any(width >= 1.0):
        raise EngineError("degenerate interval: width 1 makes the weight singular")
    weight = 1.0 / (1.0 - width**2)
    c1 = weight * np.minimum(np.abs(1.0 - q_hi), np.abs(1.0 - q_lo)) ** 2
    c0 = weight * np.minimum(q_hi, q_lo) ** 2
    total = s[active] @ c1 + (n[active] - s[active]) @ c0
    return float(total / n.sum())


@dataclass(frozen=True)
class ScoreReport:
    event: str
    variant: str
    mlik: float
    waic: float
    mbrier: float
    mbrier_alpha: float
    m_test: int

    def __post_init__(self):
        if self.mbrier < 0 or not np.isfinite(self.mbrier):
            raise EngineError("MBRIER must be finite and non-negative")
        if not (np.isfinite(self.mlik) and np.isfinite(self.waic)):
            raise EngineError("scores must be finite")


def score_result(result, train_cells, holdout_cells, alpha: float = DEFAULT_MBRIER_ALPHA) -> ScoreReport:
    """All three scores for one fitted PosteriorResult."""
    return ScoreReport(
        event=result.event,
        variant=result.variant,
        mlik=result.mlik,
        waic=waic_cells(result.draws, train_cells.n, train_cells.s),
        mbrier=mbrier_cells(alpha, result.draws, holdout_cells.n, holdout_cells.s),
        mbrier_alpha=alpha,
        m_test=holdout_cells.m,
    )


def compare_models(
    schema,
    event: str,
    variants,
    train_cells,
    holdout_cells,
    *,
    n_draws: int = 4000,
    seed: int = 0,
    strategy: str = "grid",
    config=None,
    alpha: float = DEFAULT_MBRIER_ALPHA,
) -> list[ScoreReport]:
    """Fit every variant on identical data and score it on the shared holdout."""
    from .inference import DEFAULT_CONFIG, fit_event
    from .lgm import variant_spec

    config = config or DEFAULT_CONFIG
    reports = []
    for variant in variants:
        spec = variant_spec(variant, event, schema)
        result = fit_event(
            schema, spec, train_cells, n_draws=n_draws, seed=seed, strategy=strategy, config=config
        )
        reports.append(score_result(result, train_cells, holdout_cells, alpha=alpha))
    return reports


def scores_frame(reports) -> pd.DataFrame:
    """Wide score table: one row per event, one column block per variant."""
    events = []
    for r in reports:
        if r.event not in events:
            events.append(r.event)
    variants = []
    for r in reports:
        if r.variant not in variants:
            variants.append(r.variant)
    by_key = {(r.event, r.variant): r for r in reports}
    rows = []
    for event in events:
        row: dict = {"Event": event}
        for v in variants:
            r = by_key.get((event, v))
            row[f"MLIK_{v}"] = r.mlik if r else np.nan
            row[f"WAIC_{v}"] = r.waic if r else np.nan
            row[f"MBRIER_{v}"] = r.mbrier if r else np.nan
        rows.append(row)
    return pd.DataFrame(rows)
