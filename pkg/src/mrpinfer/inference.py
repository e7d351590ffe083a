"""Approximate Bayesian inference for the latent Gaussian model.

The pipeline follows the nested-Laplace recipe:

1. For a hyperparameter value, find the conditional mode of the latent field
   by Newton-Raphson (the objective is strictly concave: Bernoulli/binomial
   log-likelihood plus a Gaussian prior) and form the Gaussian approximation
   from the curvature at the mode.
2. Approximate the unnormalized hyperparameter log-posterior as the Laplace
   ratio  log p(gamma*, lam, Y) - log p_G(gamma* | lam, Y).  For small latent
   dimensions the latent integral is refined by adaptive Gauss-Hermite
   quadrature, which is exact for Gaussian integrands and removes the O(1/n)
   Laplace error that small fixtures would otherwise exhibit.
3. Explore the hyperparameter space either at the posterior mode alone
   (empirical Bayes) or on an axis-aligned lattice in Hessian-whitened
   coordinates (step 0.5 sd), dropping points whose log-posterior falls more
   than a threshold below the mode, lazily enumerated best-first with a
   point cap.
4. Integrate: the log marginal likelihood is the Riemann sum of the explored
   points times the lattice cell volume, with a Gaussian-reference truncation
   correction (calibrating the same lattice on a standard normal), so the
   estimate is exact for Gaussian hyperposteriors regardless of the cap.
5. Sample cell probabilities from the mixture of Gaussian approximations,
   with grid points drawn proportionally to their posterior weights.

Latent posterior marginals can optionally be corrected per coordinate with
the full Laplace scheme (profile the remaining coordinates and normalize the
ratio on a 1-D grid); the default reporting path uses joint draws from the
Gaussian mixture, which every downstream quantity consumes.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.linalg import solve_triangular
from scipy.optimize import minimize
from scipy.special import expit, logsumexp

from .errors import EngineError, NonConvergenceError
from .lgm import LOG_2PI, LatentLayout

__all__ = [
    "CellLikelihood",
    "GaussianApprox",
    "GridPoint",
    "GridExploration",
    "PosteriorResult",
    "InferenceConfig",
    "conditional_mode",
    "latent_evidence",
    "hyper_logposterior",
    "explore_grid",
    "mlik",
    "sample_cells",
    "latent_marginals",
    "fit_event",
]


def _log_sigmoid(x):
    return -np.logaddexp(0.0, -x)


@dataclass(frozen=True)
class CellLikelihood:
    """Binomial sufficient statistics per cell: trials n_j and successes s_j.

    Survey rows sharing a cell share a design row, so aggregating them is
    exact for the Bernoulli model and essential for performance.
    """

    n: np.ndarray
    s: np.ndarray

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float)
        s = np.asarray(self.s, dtype=float)
        if n.shape != s.shape:
            raise EngineError("n and s must have identical shape")
        if np.any(s < 0) or np.any(s > n):
            raise EngineError("need 0 <= s_j <= n_j")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "s", s)

    @classmethod
    def from_rows(cls, y: np.ndarray, cell_ids: np.ndarray, n_cells: int) -> "CellLikelihood":
        y = np.asarray(y)
        cell_ids = np.asarray(cell_ids)
        n = np.bincount(cell_ids, minlength=n_cells).astype(float)
        s = np.bincount(cell_ids, weights=y.astype(float), minlength=n_cells)
        return cls(n=n, s=s)

    @property
    def m(self) -> int:
        return int(self.n.sum())

    def loglik(self, eta: np.ndarray) -> float:
        return float(self.s @ _log_sigmoid(eta) + (self.n - self.s) @ _log_sigmoid(-eta))

    def loglik_cols(self, eta: np.ndarray) -> np.ndarray:
        """Vectorized loglik over the columns of an (n_cells, K) eta matrix."""
        return self.s @ _log_sigmoid(eta) + (self.n - self.s) @ _log_sigmoid(-eta)

    def d1(self, eta: np.ndarray) -> np.ndarray:
        return self.s - self.n * expit(eta)

    def d2neg(self, eta: np.ndarray) -> np.ndarray:
        p = expit(eta)
        return self.n * p * (1.0 - p)


@dataclass(frozen=True)
class GaussianApprox:
    """Gaussian approximation N(mean, H^-1) with H = chol_prec @ chol_prec.T."""

    mean: np.ndarray
    chol_prec: np.ndarray
    logdet_prec: float

    def cov(self) -> np.ndarray:
        inv_l = solve_triangular(self.chol_prec, np.eye(len(self.mean)), lower=True)
        return inv_l.T @ inv_l

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        z = rng.standard_normal((len(self.mean), size))
        return (self.mean[:, None] + solve_triangular(self.chol_prec.T, z, lower=False)).T


@dataclass(frozen=True)
class InferenceConfig:
    """Fixed defaults with overrides; none of these come from the source material."""

    newton_tol: float = 1e-8
    newton_max_iter: int = 100
    grid_step: float = 0.5
    grid_threshold: float = 6.0
    grid_max_points: int = 81
    aghq_max_dim: int = 4
    fd_step: float = 0.05
    mode_maxiter_per_dim: int = 400


DEFAULT_CONFIG = InferenceConfig()


# -- latent conditional posterior ---------------------------------------------------


def conditional_mode(
    layout: LatentLayout,
    cells,
    lam: np.ndarray,
    *,
    x0: np.ndarray | None = None,
    config: InferenceConfig = DEFAULT_CONFIG,
) -> tuple[GaussianApprox, int]:
    """Newton-Raphson mode of p(gamma | lam, Y) and its Gaussian approximation.

    Monotone in the objective via step halving; converges when the Newton
    step's max-norm drops below ``newton_tol``.  Raises NonConvergenceError
    after ``newton_max_iter`` iterations.
    """
    a = layout.design(lam)
    q, _ = layout.prior_precision(lam)
    gamma = np.zeros(layout.n_latent) if x0 is None else np.array(x0, dtype=float)

    def objective(g):
        return cells.loglik(a @ g) - 0.5 * g @ q @ g

    f = objective(gamma)
    if not np.isfinite(f):
        gamma = np.zeros(layout.n_latent)
        f = objective(gamma)
    n_iter = 0
    converged = False
    for n_iter in range(1, config.newton_max_iter + 1):
        eta = a @ gamma
        grad = a.T @ cells.d1(eta) - q @ gamma
        w = cells.d2neg(eta)
        h = (a.T * w) @ a + q
        try:
            chol = np.linalg.cholesky(h)
        except np.linalg.LinAlgError as exc:
            raise NonConvergenceError("non-positive-definite Hessian") from exc
        step = solve_triangular(
            chol.T, solve_triangular(chol, grad, lower=True), lower=False
        )
        if np.max(np.abs(step)) < config.newton_tol:
            gamma = gamma + step
            converged = True
            break
        t = 1.0
        for _ in range(60):
            cand = gamma + t * step
            fc = objective(cand)
            if np.isfinite(fc) and fc >= f - 1e-12:
                break
            t *= 0.5
        else:
            raise NonConvergenceError("step halving failed to increase the objective")
        gamma, f = cand, fc
    if not converged:
        raise NonConvergenceError(
            f"Newton-Raphson did not converge in {config.newton_max_iter} iterations"
        )
    w = cells.d2neg(a @ gamma)
    h = (a.T * w) @ a + q
    chol = np.linalg.cholesky(h)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    return GaussianApprox(mean=gamma, chol_prec=chol, logdet_prec=logdet), n_iter


def _gauss_hermite_nodes(dim: int) -> tuple[np.ndarray, np.ndarray]:
    per_dim = {1: 41, 2: 25, 3: 17, 4: 9}.get(dim, 9)
    t, w = np.polynomial.hermite.hermgauss(per_dim)
    grids = np.meshgrid(*([t] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=0)  # (dim, K)
    logw = np.log(w)
    grids_w = np.meshgrid(*([logw] * dim), indexing="ij")
    log_weights = np.sum(np.stack([g.ravel() for g in grids_w], axis=0), axis=0)
    return nodes, log_weights


def latent_evidence(
    layout: LatentLayout,
    cells,
    lam: np.ndarray,
    *,
    x0: np.ndarray | None = None,
    config: InferenceConfig = DEFAULT_CONFIG,
) -> tuple[float, GaussianApprox, int]:
    """log of int p(Y | gamma) p(gamma | lam) dgamma.

    The Laplace ratio at the conditional mode, refined by adaptive
    Gauss-Hermite quadrature when the latent dimension is small enough
    (``aghq_max_dim``); the quadrature is exact for Gaussian integrands, so
    the two paths agree wherever the Laplace error is negligible.
    """
    approx, n_iter = conditional_mode(layout, cells, lam, x0=x0, config=config)
    a = layout.design(lam)
    q, logdet_q = layout.prior_precision(lam)
    d = layout.n_latent

    def h(gammas):  # (d, K) -> (K,) log joint density over gamma columns
        eta = a @ gammas
        if hasattr(cells, "loglik_cols"):
            ll = cells.loglik_cols(eta)
        else:
            ll = np.array([cells.loglik(eta[:, k]) for k in range(gammas.shape[1])])
        quad = 0.5 * np.einsum("ik,ij,jk->k", gammas, q, gammas)
        return ll + 0.5 * logdet_q - 0.5 * d * LOG_2PI - quad

    if d <= config.aghq_max_dim:
        nodes, log_w = _gauss_hermite_nodes(d)
        shift = solve_triangular(approx.chol_prec.T, nodes, lower=False)
        gammas = approx.mean[:, None] + shift
        vals = h(gammas) + np.sum(nodes * nodes, axis=0) + log_w
        evidence = float(logsumexp(vals)) - 0.5 * approx.logdet_prec
    else:
        g = approx.mean
        evidence = (
            cells.loglik(a @ g)
            - 0.5 * g @ q @ g
            + 0.5 * logdet_q
            - 0.5 * approx.logdet_prec
        )
    return float(evidence), approx, n_iter


def hyper_logposterior(
    layout: LatentLayout,
    cells,
    lam: np.ndarray,
    *,
    x0: np.ndarray | None = None,
    config: InferenceConfig = DEFAULT_CONFIG,
) -> tuple[float, GaussianApprox, int]:
    """Unnormalized log posterior of the hyperparameters (Laplace-approximated).

    All density normalization constants are kept, so exp of this value
    integrates (over the internal hyperparameter scale) to the marginal
    likelihood p(Y | X).
    """
    lp_prior = layout.hyper_logprior(lam) if layout.n_hyper else 0.0
    if not np.isfinite(lp_prior):
        return -np.inf, None, 0
    evidence, approx, n_iter = latent_evidence(layout, cells, lam, x0=x0, config=config)
    return evidence + lp_prior, approx, n_iter


# -- hyperparameter exploration ------------------------------------------------------


@dataclass(frozen=True)
class GridPoint:
    lattice: tuple[int, ...]
    lam: np.ndarray
    logpost: float
    weight: float
    approx: GaussianApprox
    newton_iters: int


@dataclass(frozen=True)
class GridExploration:
    layout: LatentLayout
    strategy: str
    points: tuple[GridPoint, ...]
    mode_lam: np.ndarray
    directions: np.ndarray  # lam = mode + directions @ z, z in whitened coords
    logdet_directions: float
    step: float
    mode_evals: int

    @property
    def n_hyper(self) -> int:
        return self.layout.n_hyper

    def weights(self) -> np.ndarray:
        return np.array([p.weight for p in self.points])


def _find_mode(layout, cells, config) -> tuple[np.ndarray, int]:
    state = {"x0": None, "evals": 0}

    def neg(lam):
        state["evals"] += 1
        try:
            lp, approx, _ = hyper_logposterior(layout, cells, lam, x0=state["x0"], config=config)
        except NonConvergenceError:
            return 1e12
        if not np.isfinite(lp):
            return 1e12
        state["x0"] = approx.mean
        return -lp

    d = layout.n_hyper
    opts = dict(xatol=1e-4, fatol=1e-7, maxiter=config.mode_maxiter_per_dim * d)
    res = minimize(neg, layout.init_lam(), method="Nelder-Mead", options=opts)
    res = minimize(neg, res.x, method="Nelder-Mead", options=opts)
    if not np.isfinite(res.fun) or res.fun >= 1e11:
        raise EngineError("hyperparameter mode search failed")
    return np.asarray(res.x, dtype=float), state["evals"]


def _fd_hessian(fun, x0, f0, h):
    d = len(x0)
    steps = h * (1.0 + np.abs(x0))
    hess = np.empty((d, d))
    fp = np.empty(d)
    fm = np.empty(d)
    for i in range(d):
        e = np.zeros(d)
        e[i] = steps[i]
        fp[i] = fun(x0 + e)
        fm[i] = fun(x0 - e)
        hess[i, i] = (fp[i] - 2.0 * f0 + fm[i]) / steps[i] ** 2
    for i in range(d):
        for j in range(i + 1, d):
            ei = np.zeros(d)
            ej = np.zeros(d)
            ei[i] = steps[i]
            ej[j] = steps[j]
            val = (
                fun(x0 + ei + ej) - fun(x0 + ei - ej) - fun(x0 - ei + ej) + fun(x0 - ei - ej)
            ) / (4.0 * steps[i] * steps[j])
            hess[i, j] = hess[j, i] = val
    return hess


def explore_grid(
    layout: LatentLayout,
    cells,
    strategy: str = "grid",
    config: InferenceConfig = DEFAULT_CONFIG,
) -> GridExploration:
    """Explore the hyperparameter posterior.

    ``eb``: the single posterior mode.  ``grid``: best-first enumeration of
    the axis-aligned lattice (step ``grid_step`` standard deviations in
    Hessian-whitened coordinates) keeping points within ``grid_threshold``
    log units of the best, capped at ``grid_max_points``.
    """
    if strategy not in ("grid", "eb"):
        raise EngineError(f"unknown exploration strategy {strategy!r}")
    d = layout.n_hyper
    if d == 0:
        lp, approx, it = hyper_logposterior(layout, cells, np.empty(0), config=config)
        point = GridPoint((), np.empty(0), lp, 1.0, approx, it)
        return GridExploration(
            layout, strategy, (point,), np.empty(0), np.empty((0, 0)), 0.0, config.grid_step, 0
        )

    mode, evals = _find_mode(layout, cells, config)
    warm = {"x0": None}

    def lp_of(lam):
        try:
            lp, approx, it = hyper_logposterior(layout, cells, lam, x0=warm["x0"], config=config)
        except NonConvergenceError:
            return -np.inf, None, 0
        if approx is not None:
            warm["x0"] = approx.mean
        return lp, approx, it

    f_mode, approx_mode, it_mode = lp_of(mode)
    if not np.isfinite(f_mode):
        raise EngineError("log posterior not finite at the mode")
    neg_hess = -_fd_hessian(lambda x: lp_of(x)[0], mode, f_mode, config.fd_step)
    evals += 1 + 2 * d + 2 * d * (d - 1)
    evals_count = [evals]
    evl, evv = np.linalg.eigh(0.5 * (neg_hess + neg_hess.T))
    evl = np.maximum(evl, max(1e-8, 1e-6 * float(np.max(np.abs(evl)))))
    directions = evv @ np.diag(1.0 / np.sqrt(evl))
    logdet_dir = -0.5 * float(np.sum(np.log(evl)))

    zero = (0,) * d
    results: dict[tuple[int, ...], tuple[float, GaussianApprox, int]] = {
        zero: (f_mode, approx_mode, it_mode)
    }
    kept = {zero}
    best = f_mode
    if strategy == "grid":
        frontier = [(-f_mode, zero)]
        while frontier and len(kept) < config.grid_max_points:
            _, base = heapq.heappop(frontier)
            base_arr = np.array(base)
            warm["x0"] = results[base][1].mean
            for i in range(d):
                for delta in (-1, 1):
                    cand = base_arr.copy()
                    cand[i] += delta
                    key = tuple(int(v) for v in cand)
                    if key in results:
                        continue
                    lam = mode + directions @ (config.grid_step * cand)
                    lp, approx, it = lp_of(lam)
                    evals_count[0] += 1
                    results[key] = (lp, approx, it)
                    if np.isfinite(lp):
                        best = max(best, lp)
                        if lp >= best - config.grid_threshold and len(kept) < config.grid_max_points:
                            kept.add(key)
                            heapq.heappush(frontier, (-lp, key))
        kept = {k for k in kept if results[k][0] >= best - config.grid_threshold}

    lattice = sorted(kept)
    logposts = np.array([results[k][0] for k in lattice])
    w = np.exp(logposts - logsumexp(logposts))
    points = tuple(
        GridPoint(
            lattice=k,
            lam=mode + directions @ (config.grid_step * np.array(k)),
            logpost=float(results[k][0]),
            weight=float(wi),
            approx=results[k][1],
            newton_iters=results[k][2],
        )
        for k, wi in zip(lattice, w)
    )
    return GridExploration(
        layout=layout,
        strategy=strategy,
        points=points,
        mode_lam=mode,
        directions=directions,
        logdet_directions=logdet_dir,
        step=config.grid_step,
        mode_evals=evals_count[0],
    )


def mlik(exploration: GridExploration) -> float:
    """Log marginal likelihood from the explored grid.

    Riemann sum of the unnormalized posterior over the lattice, divided by
    the same Riemann sum applied to a standard normal in the whitened
    coordinates (whose true integral is 1).  For a single-point (empirical
    Bayes) exploration this reduces to the Laplace approximation of the
    hyperparameter integral; for a complete grid the reference factor tends
    to the plain cell-volume weight.
    """
    d = exploration.n_hyper
    lp = np.array([p.logpost for p in exploration.points])
    if d == 0:
        return float(lp[0])
    z2 = np.array(
        [exploration.step**2 * float(np.dot(p.lattice, p.lattice)) for p in exploration.points]
    )
    return float(
        logsumexp(lp)
        + exploration.logdet_directions
        + 0.5 * d * LOG_2PI
        - logsumexp(-0.5 * z2)
    )


# -- posterior draws of the cell probabilities ---------------------------------------


def sample_cells(
    layout: LatentLayout,
    exploration: GridExploration,
    n_draws: int,
    seed: int,
) -> np.ndarray:
    """(S, P) matrix of cell probabilities sampled from the grid mixture.

    Each draw picks a grid point with probability equal to its posterior
    weight, samples the latent field from the Gaussian approximation at that
    point and maps it through the design and the inverse logit.  Counter-based
    RNG keyed by ``seed``; draws are deterministic for a given seed.
    """
    if n_draws < 1:
        raise EngineError("need at least one draw")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    counts = rng.multinomial(n_draws, exploration.weights())
    out = np.empty((n_draws, layout.schema.n_cells))
    row = 0
    for point, c in zip(exploration.points, counts):
        if c == 0:
            continue
        a = layout.design(point.lam)
        gammas = point.approx.sample(rng, int(c))
        out[row : row + c] = np.clip(expit(gammas @ a.T), 1e-12, 1.0 - 1e-12)
        row += c
    return out


# -- latent posterior marginals -------------------------------------------------------


def _profile_logdensity(layout, cells, lam, approx, coord, values, config):
    """Full-Laplace unnormalized log marginal of one latent coordinate."""
    a = layout.design(lam)
    q, _ = layout.prior_precision(lam)
    d = layout.n_latent
    if d == 1:
        eta = np.outer(a[:, 0], values)
        ll = cells.s @ _log_sigmoid(eta) + (cells.n - cells.s) @ _log_sigmoid(-eta)
        return ll - 0.5 * q[0, 0] * values**2
    mask = np.arange(d) != coord
    a_r, a_i = a[:, mask], a[:, coord]
    q_rr, q_ri, q_ii = q[np.ix_(mask, mask)], q[mask, coord], q[coord, coord]
    out = np.empty(len(values))
    g = approx.mean[mask].copy()
    for idx, v in enumerate(values):
        offset = a_i * v
        for _ in range(config.newton_max_iter):
            eta = a_r @ g + offset
            grad = a_r.T @ cells.d1(eta) - q_rr @ g - v * q_ri
            w = cells.d2neg(eta)
            h = (a_r.T * w) @ a_r + q_rr
            chol = np.linalg.cholesky(h)
            step = solve_triangular(chol.T, solve_triangular(chol, grad, lower=True), lower=False)
            g = g + step
            if np.max(np.abs(step)) < config.newton_tol:
                break
        eta = a_r @ g + offset
        w = cells.d2neg(eta)
        h = (a_r.T * w) @ a_r + q_rr
        chol = np.linalg.cholesky(h)
        obj = (
            cells.loglik(eta)
            - 0.5 * g @ q_rr @ g
            - v * q_ri @ g
            - 0.5 * q_ii * v * v
        )
        out[idx] = obj - float(np.sum(np.log(np.diag(chol))))
    return out


def latent_marginals(
    layout: LatentLayout,
    cells,
    exploration: GridExploration,
    *,
    correction: bool = True,
    n_points: int = 81,
    half_width: float = 7.0,
    config: InferenceConfig = DEFAULT_CONFIG,
) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and sd of every latent coordinate.

    With ``correction`` the per-coordinate full-Laplace density is normalized
    numerically at each grid point (accurate for small models); without it
    the Gaussian-approximation moments are mixed directly.
    """
    d = layout.n_latent
    means = np.zeros(d)
    second = np.zeros(d)
    for point in exploration.points:
        cov = point.approx.cov()
        sd = np.sqrt(np.diag(cov))
        if not correction:
            means += point.weight * point.approx.mean
            second += point.weight * (np.diag(cov) + point.approx.mean**2)
            continue
        for i in range(d):
            vs = point.approx.mean[i] + sd[i] * np.linspace(-half_width, half_width, n_points)
            lp = _profile_logdensity(layout, cells, point.lam, point.approx, i, vs, config)
            lp -= lp.max()
            dens = np.exp(lp)
            norm = np.trapezoid(dens, vs)
            m1 = np.trapezoid(vs * dens, vs) / norm
            m2 = np.trapezoid(vs * vs * dens, vs) / norm
            means[i] += point.weight * m1
            second[i] += point.weight * m2
    sds = np.sqrt(np.maximum(second - means**2, 0.0))
    return means, sds


# -- orchestration ---------------------------------------------------------------------


@dataclass(frozen=True)
class PosteriorResult:
    """Fit artifacts for one event and model variant."""

    event: str
    variant: str
    strategy: str
    seed: int
    hyper_names: tuple[str, ...]
    mlik: float
    draws: np.ndarray  # (S, P) cell probabilities
    grid_table: pd.DataFrame
    diagnostics: dict

    @property
    def n_draws(self) -> int:
        return self.draws.shape[0]

    def save(self, outdir, stem: str) -> list[str]:
        """Write the documented CSV artifacts: grid, draws, meta."""
        from pathlib import Path

        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = []
        grid_path = outdir / f"{stem}.grid.csv"
        self.grid_table.to_csv(grid_path, index=False, float_format="%.10g")
        paths.append(str(grid_path))
        draws_path = outdir / f"{stem}.draws.csv"
        cols = [f"cell_{j}" for j in range(self.draws.shape[1])]
        pd.DataFrame(self.draws, columns=cols).to_csv(
            draws_path, index=False, float_format="%.8g"
        )
        paths.append(str(draws_path))
        meta_path = outdir / f"{stem}.meta.csv"
        meta = {
            "event": self.event,
            "variant": self.variant,
            "strategy": self.strategy,
            "seed": self.seed,
            "hyper_names": " ".join(self.hyper_names),
            "mlik": f"{self.mlik:.10g}",
            "n_draws": self.n_draws,
        }
        meta.update({k: v for k, v in sorted(self.diagnostics.items())})
        pd.DataFrame(sorted(meta.items()), columns=["key", "value"]).to_csv(
            meta_path, index=False
        )
        paths.append(str(meta_path))
        return paths

    @classmethod
    def load(cls, outdir, stem: str) -> "PosteriorResult":
        from pathlib import Path

        outdir = Path(outdir)
        meta = dict(
            pd.read_csv(outdir / f"{stem}.meta.csv", dtype=str).itertuples(index=False, name=None)
        )
        grid = pd.read_csv(outdir / f"{stem}.grid.csv")
        draws = pd.read_csv(outdir / f"{stem}.draws.csv").to_numpy(dtype=float)
        known = {"event", "variant", "strategy", "seed", "hyper_names", "mlik", "n_draws"}
        return cls(
            event=meta["event"],
            variant=meta["variant"],
            strategy=meta["strategy"],
            seed=int(meta["seed"]),
            hyper_names=tuple(meta["hyper_names"].split()) if meta["hyper_names"] else (),
            mlik=float(meta["mlik"]),
            draws=draws,
            grid_table=grid,
            diagnostics={k: v for k, v in meta.items() if k not in known},
        )


def grid_frame(exploration: GridExploration) -> pd.DataFrame:
    rows = []
    for p in exploration.points:
        row = {f"z{i}": v for i, v in enumerate(p.lattice)}
        row.update({name: val for name, val in zip(exploration.layout.hyper_names, p.lam)})
        row["logpost"] = p.logpost
        row["weight"] = p.weight
        row["newton_iters"] = p.newton_iters
        rows.append(row)
    return pd.DataFrame(rows)


def fit_event(
    schema,
    spec,
    cells: CellLikelihood,
    *,
    n_draws: int = 4000,
    seed: int = 0,
    strategy: str = "grid",
    config: InferenceConfig = DEFAULT_CONFIG,
) -> PosteriorResult:
    """Full inference for one event: explore, integrate, sample."""
    from .rng import subseed

    layout = LatentLayout(schema, spec)
    exploration = explore_grid(layout, cells, strategy=strategy, config=config)
    ml = mlik(exploration)
    draw_seed = subseed(seed, "inference", spec.event, spec.variant)
    draws = sample_cells(layout, exploration, n_draws, draw_seed)
    diagnostics = {
        "n_grid": len(exploration.points),
        "mode_evals": exploration.mode_evals,
        "newton_iters_max": max(p.newton_iters for p in exploration.points),
        "m_rows": cells.m,
    }
    return PosteriorResult(
        event=spec.event,
        variant=spec.variant,
        strategy=strategy,
        seed=seed,
        hyper_names=layout.hyper_names,
        mlik=float(ml),
        draws=draws,
        grid_table=grid_frame(exploration),
        diagnostics=diagnostics,
    )
