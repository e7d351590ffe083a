"""Latent-class segmentation: EM for mixtures of multinomials.

The observed process is a vector of independent multinomials per respondent:
the five demographic factors plus a three-category political-preference
variable (Lukashenka / Tsikhanouskaya / neither; undecided, non-voters,
against-all and the minor candidates all map to "neither").  The state count
is selected by BIC over 1..K_max.  Responsibilities are computed per unique
response pattern, which keeps the E-step tiny regardless of sample size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from .census import CensusCellTable, weights
from .errors import EngineError
from .rng import substream
from .schema import CategoricalSchema, Selector

PREFERENCE_VAR = "preference"
PREFERENCE_LEVELS = ("lukashenka", "tsikhanouskaya", "neither")
SMOOTHING = 1e-10


@dataclass(frozen=True)
class ClassData:
    """Categorical observations compressed to unique patterns with counts."""

    var_names: tuple[str, ...]
    var_levels: tuple[tuple[str, ...], ...]
    patterns: np.ndarray  # (n_patterns, n_vars) level indices
    counts: np.ndarray  # (n_patterns,)

    @property
    def n_rows(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_codes(cls, codes: np.ndarray, var_names, var_levels) -> "ClassData":
        codes = np.asarray(codes, dtype=np.int64)
        if codes.size == 0:
            raise EngineError("no observations for clustering")
        patterns, counts = np.unique(codes, axis=0, return_counts=True)
        return cls(
            var_names=tuple(var_names),
            var_levels=tuple(tuple(l) for l in var_levels),
            patterns=patterns,
            counts=counts.astype(float),
        )


def class_data_from_records(records, schema: CategoricalSchema) -> ClassData:
    """Build the clustering input from parsed survey records.

    Rows without a candidate answer are dropped; every other row contributes
    its five factor levels plus the derived preference category.
    """
    var_names = schema.factor_names + (PREFERENCE_VAR,)
    var_levels = tuple(f.levels for f in schema.factors) + (PREFERENCE_LEVELS,)
    rows = []
    for rec in records:
        if rec.candidate in (None, "missing"):
            continue
        code = [schema.level_index(f.name, rec.levels[f.name]) for f in schema.factors]
        if rec.candidate == "lukashenka":
            pref = 0
        elif rec.candidate == "tsikhanouskaya":
            pref = 1
        else:
            pref = 2
        rows.append(code + [pref])
    if not rows:
        raise EngineError("no rows with a candidate answer to cluster")
    return ClassData.from_codes(np.array(rows), var_names, var_levels)


@dataclass(frozen=True)
class MixtureModel:
    """Fitted mixture of multinomials."""

    k: int
    weights: np.ndarray  # (K,) state probabilities
    thetas: tuple[np.ndarray, ...]  # per variable: (K, L_v) category probabilities
    loglik: float
    bic: float
    n_rows: int
    var_names: tuple[str, ...]
    var_levels: tuple[tuple[str, ...], ...]
    n_iter: int

    @property
    def n_parameters(self) -> int:
        free = self.k - 1
        for th in self.thetas:
            free += self.k * (th.shape[1] - 1)
        return free


def _log_pattern_prob(data: ClassData, log_pi, log_thetas) -> np.ndarray:
    # (n_patterns, K) joint log probability of pattern and state
    out = np.broadcast_to(log_pi, (data.patterns.shape[0], len(log_pi))).copy()
    for v, log_th in enumerate(log_thetas):
        out += log_th[:, data.patterns[:, v]].T
    return out


def _loglik_from_joint(joint: np.ndarray, counts: np.ndarray) -> float:
    return float(counts @ logsumexp(joint, axis=1))


def em_fit(
    data: ClassData,
    k: int,
    seed: int,
    *,
    max_iter: int = 3000,
    tol: float = 1e-8,
    restarts: int = 10,
) -> MixtureModel:
    """EM with closed-form multinomial updates; best of ``restarts`` starts.

    The log-likelihood is non-decreasing every iteration; iteration stops
    when the gain drops below ``tol``.  Ties between restarts break toward
    the earlier restart, so the result is deterministic per seed.
    """
    if k < 1:
        raise EngineError("need k >= 1")
    best: MixtureModel | None = None
    n = data.n_rows
    for restart in range(max(1, restarts)):
        rng = substream(seed, "cluster", f"k{k}", f"restart{restart}")
        pi = rng.dirichlet(np.ones(k)) if k > 1 else np.ones(1)
        thetas = []
        for levels in data.var_levels:
            th = rng.uniform(0.5, 1.5, size=(k, len(levels)))
            thetas.append(th / th.sum(axis=1, keepdims=True))
        loglik = -np.inf
        n_iter = 0
        for n_iter in range(1, max_iter + 1):
            joint = _log_pattern_prob(data, np.log(pi), [np.log(t) for t in thetas])
            new_loglik = _loglik_from_joint(joint, data.counts)
            resp = np.exp(joint - logsumexp(joint, axis=1, keepdims=True))
            wresp = resp * data.counts[:, None]
            state_mass = wresp.sum(axis=0)
            pi = state_mass / n
            thetas = []
            for v, levels in enumerate(data.var_levels):
                th = np.zeros((k, len(levels)))
                for lvl in range(len(levels)):
                    sel = data.patterns[:, v] == lvl
                    th[:, lvl] = wresp[sel].sum(axis=0)
                th += SMOOTHING
                thetas.append(th / th.sum(axis=1, keepdims=True))
            if new_loglik - loglik < tol and np.isfinite(loglik):
                loglik = new_loglik
                break
            loglik = new_loglik
        bic = -2.0 * loglik + (
            (k - 1) + k * sum(len(l) - 1 for l in data.var_levels)
        ) * np.log(n)
        model = MixtureModel(
            k=k,
            weights=pi,
            thetas=tuple(thetas),
            loglik=loglik,
            bic=float(bic),
            n_rows=n,
            var_names=data.var_names,
            var_levels=data.var_levels,
            n_iter=n_iter,
        )
        if best is None or model.loglik > best.loglik + 1e-12:
            best = model
    return best


def loglik_trace(data: ClassData, k: int, seed: int, n_iter: int = 50) -> np.ndarray:
    """Log-likelihood after each of the first EM iterations (one start)."""
    rng = substream(seed, "cluster", f"k{k}", "restart0")
    pi = rng.dirichlet(np.ones(k)) if k > 1 else np.ones(1)
    thetas = []
    for levels in data.var_levels:
        th = rng.uniform(0.5, 1.5, size=(k, len(levels)))
        thetas.append(th / th.sum(axis=1, keepdims=True))
    trace = []
    n = data.n_rows
    for _ in range(n_iter):
        joint = _log_pattern_prob(data, np.log(pi), [np.log(t) for t in thetas])
        trace.append(_loglik_from_joint(joint, data.counts))
        resp = np.exp(joint - logsumexp(joint, axis=1, keepdims=True))
        wresp = resp * data.counts[:, None]
        pi = wresp.sum(axis=0) / n
        new_thetas = []
        for v, levels in enumerate(data.var_levels):
            th = np.zeros((k, len(levels)))
            for lvl in range(len(levels)):
                sel = data.patterns[:, v] == lvl
                th[:, lvl] = wresp[sel].sum(axis=0)
            th += SMOOTHING
            new_thetas.append(th / th.sum(axis=1, keepdims=True))
        thetas = new_thetas
    return np.array(trace)


def select_k(
    data: ClassData,
    k_max: int = 7,
    seed: int = 0,
    *,
    max_iter: int = 3000,
    tol: float = 1e-8,
    restarts: int = 10,
) -> tuple[int, list[MixtureModel]]:
    """Fit K = 1..k_max and pick the BIC minimizer (ties to the smaller K)."""
    if k_max < 1:
        raise EngineError("k_max must be >= 1")
    models = [
        em_fit(data, k, seed, max_iter=max_iter, tol=tol, restarts=restarts)
        for k in range(1, k_max + 1)
    ]
    best_k = min(models, key=lambda m: (m.bic, m.k)).k
    return best_k, models


# -- poststratified cluster profiles ---------------------------------------------------


def cell_memberships(model: MixtureModel, schema: CategoricalSchema) -> np.ndarray:
    """(P, K) state posterior for each census cell, preference marginalized.

    P(state | factor levels) follows from the fitted mixture with the
    preference variable summed out (its categories integrate to one).
    """
    idx = schema.level_index_matrix()
    log_m = np.broadcast_to(np.log(model.weights), (schema.n_cells, model.k)).copy()
    for v, name in enumerate(model.var_names):
        if name == PREFERENCE_VAR:
            continue
        j = schema.factor_names.index(name)
        log_m += np.log(model.thetas[v][:, idx[:, j]]).T
    return np.exp(log_m - logsumexp(log_m, axis=1, keepdims=True))


@dataclass(frozen=True)
class ClusterProfiles:
    sizes: np.ndarray  # (K,) poststratified cluster shares
    factor_profiles: pd.DataFrame  # cluster x variable x level probability
    support: pd.DataFrame | None  # per-cluster candidate-support summaries


def cluster_profiles(
    model: MixtureModel,
    census: CensusCellTable,
    schema: CategoricalSchema,
    draws_by_event: dict[str, np.ndarray] | None = None,
) -> ClusterProfiles:
    """Poststratify cluster memberships, factor profiles and support rates.

    Cluster sizes are census-weighted means of the cell memberships; factor
    profiles are membership-weighted level shares.  When posterior cell draws
    are supplied, per-cluster support rates combine the membership weights
    with the draws, giving a posterior summary per cluster and event.
    """
    member = cell_memberships(model, schema)  # (P, K)
    ids, w = weights(census, Selector.all())
    wm = w[:, None] * member[ids]  # (sel, K)
    sizes = wm.sum(axis=0)
    idx = schema.level_index_matrix()[ids]
    rows = []
    for k in range(model.k):
        for j, f in enumerate(schema.factors):
            for lvl_i, lvl in enumerate(f.levels):
                share = wm[idx[:, j] == lvl_i, k].sum() / sizes[k]
                rows.append(
                    {"cluster": k + 1, "variable": f.name, "level": lvl, "share": share}
                )
        v = model.var_names.index(PREFERENCE_VAR)
        for lvl_i, lvl in enumerate(PREFERENCE_LEVELS):
            rows.append(
                {
                    "cluster": k + 1,
                    "variable": PREFERENCE_VAR,
                    "level": lvl,
                    "share": float(model.thetas[v][k, lvl_i]),
                }
            )
    profiles = pd.DataFrame(rows)
    support = None
    if draws_by_event:
        from .poststrat import summarize

        srows = []
        for event in sorted(draws_by_event):
            draws = draws_by_event[event][:, ids]  # (S, sel)
            for k in range(model.k):
                wk = wm[:, k] / sizes[k]
                theta = draws @ wk
                summ = summarize(theta, f"cluster {k + 1}")
                srows.append(
                    {
                        "event": event,
                        "cluster": k + 1,
                        "size": sizes[k],
                        "mean": summ.mean,
                        "median": summ.median,
                        "q0.005": summ.quantiles[0.005],
                        "q0.995": summ.quantiles[0.995],
                    }
                )
        support = pd.DataFrame(srows)
    return ClusterProfiles(sizes=sizes, factor_profiles=profiles, support=support)
