"""Latent Gaussian model assembly.

Builds everything inference needs from a schema and a model specification:
the cell-level design, the sparse prior precision of the latent vector, and
the hyperprior density on the internal (unconstrained) hyperparameter scale.

Latent vector layout (internal): optional intercept, then one block per
factor in schema order (iid blocks share one pooled precision, ordinal
blocks may be AR1), then the spatial field.  The spatial field follows the
reparameterized Besag-York-Mollie construction

    delta_j = (omega_j * sqrt(1 - rho) + phi_j * sqrt(rho)) / sqrt(tau)

with omega iid standard normal over the graph nodes and phi an intrinsic CAR
effect scaled to unit generalized marginal variance and constrained to sum
to zero.  Internally phi is represented in its sum-to-zero eigenbasis, so
every latent block has a proper Gaussian prior; the hyperparameters enter
the spatial part of the design as column scalings.

Internal hyperparameter scales: log precision for every tau (anchored on the
block's marginal standard deviation), log((1+rho)/(1-rho)) for AR1
correlations, logit for the spatial mixing proportion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq
from scipy.special import expit

from .errors import ModelError, SchemaError
from .schema import CategoricalSchema

LOG_2PI = math.log(2.0 * math.pi)


# -- priors ---------------------------------------------------------------------


@dataclass(frozen=True)
class PCPrior:
    """Penalized-complexity prior calibrated by Pr(sigma > u) = alpha."""

    u: float = 1.0
    alpha: float = 0.1

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0) or self.u <= 0.0:
            raise ModelError("PC prior needs u > 0 and 0 < alpha < 1")

    @property
    def rate(self) -> float:
        return -math.log(self.alpha) / self.u


def pc_prior_logdensity(prior: PCPrior, sigma: float) -> float:
    """Exponential log density on the standard deviation scale."""
    if sigma <= 0.0:
        raise ModelError("sigma must be positive")
    return math.log(prior.rate) - prior.rate * sigma


# -- precision constructors -------------------------------------------------------


def ar1_precision(n: int, rho: float, tau_marginal: float) -> sp.csc_matrix:
    """Tridiagonal precision of a stationary AR1 block.

    The inverse is the covariance Sigma_kl = rho^|k-l| / tau_marginal, i.e.
    the block is anchored on its marginal precision, not the innovation
    precision.
    """
    if n < 2:
        raise ModelError("AR1 block needs n >= 2")
    if abs(rho) >= 1.0:
        raise ModelError("|rho| must be < 1")
    if tau_marginal <= 0.0:
        raise ModelError("tau must be positive")
    kappa = tau_marginal / (1.0 - rho * rho)
    diag = np.full(n, 1.0 + rho * rho)
    diag[0] = diag[-1] = 1.0
    off = np.full(n - 1, -rho)
    return sp.diags([off, diag, off], offsets=[-1, 0, 1], format="csc") * kappa


def ar1_logdet(n: int, rho: float, tau_marginal: float) -> float:
    # |Q| = kappa^n (1-rho^2)^(n-1) with kappa = tau/(1-rho^2).
    return n * math.log(tau_marginal) - math.log(1.0 - rho * rho)


def icar_precision(nodes: Sequence[str], edges) -> sp.csc_matrix:
    """Unscaled intrinsic CAR precision D - A over the adjacency graph."""
    pos = {n: i for i, n in enumerate(nodes)}
    n = len(nodes)
    q = np.zeros((n, n))
    for a, b in edges:
        i, j = pos[a], pos[b]
        q[i, j] -= 1.0
        q[j, i] -= 1.0
        q[i, i] += 1.0
        q[j, j] += 1.0
    return sp.csc_matrix(q)


@dataclass(frozen=True)
class Bym2Block:
    """Spatial prior pieces shared by every hyperparameter value.

    ``eigvecs``/``eigvals`` describe the sum-to-zero eigenbasis of the scaled
    ICAR precision: phi = eigvecs @ z with z ~ N(0, diag(1/eigvals)).  The
    scaling makes the geometric mean of the constrained marginal variances
    equal to one.
    """

    nodes: tuple[str, ...]
    icar: np.ndarray          # unscaled D - A
    scaling: float            # geometric-mean variance scaling
    eigvecs: np.ndarray       # (n_nodes, n_nodes - 1)
    eigvals: np.ndarray       # (n_nodes - 1,) eigenvalues of scaling * (D - A)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def phi_marginal_cov(self) -> np.ndarray:
        """Covariance of the constrained, scaled ICAR component."""
        return (self.eigvecs / self.eigvals) @ self.eigvecs.T

    def delta_cov(self, tau: float, rho: float) -> np.ndarray:
        """Covariance of the node effects delta at given hyperparameters."""
        n = self.n_nodes
        return ((1.0 - rho) * np.eye(n) + rho * self.phi_marginal_cov()) / tau

    @cached_property
    def mixing_pc_table(self) -> "MixingPrior":
        return MixingPrior.build(1.0 / self.eigvals)


def bym2_block(schema: CategoricalSchema) -> Bym2Block:
    """Construct the spatial block for the schema's adjacency graph."""
    if schema.spatial_factor is None:
        raise SchemaError("schema has no spatial factor")
    q = icar_precision(schema.nodes, schema.edges).toarray()
    n = q.shape[0]
    if n < 2:
        raise SchemaError("spatial graph needs >= 2 nodes")
    evals, evecs = np.linalg.eigh(q)
    if evals[1] <= 1e-10:
        raise SchemaError("disconnected adjacency graph")
    # Generalized inverse under the sum-to-zero constraint.
    vp = evecs[:, 1:]
    lam = evals[1:]
    cov = (vp / lam) @ vp.T
    scaling = float(np.exp(np.mean(np.log(np.diag(cov)))))
    return Bym2Block(
        nodes=tuple(schema.nodes),
        icar=q,
        scaling=scaling,
        eigvecs=vp,
        eigvals=lam * scaling,
    )


@dataclass(frozen=True)
class MixingPrior:
    """Tabulated PC-type prior for the BYM2 mixing proportion.

    Distance from the base model (rho = 0) is the Kullback-Leibler distance
    over the sum-to-zero eigendirections of the scaled ICAR covariance; the
    prior is exponential in that distance, renormalized over rho in (0, 1),
    with the rate calibrated so that Pr(rho < 0.5) = 0.5 whenever that median
    statement is attainable (else the untruncated-exponential rate is kept).
    """

    log_spline: CubicSpline
    theta: float

    @staticmethod
    def build(gammas: np.ndarray) -> "MixingPrior":
        gm1 = gammas - 1.0

        def dist(rho):
            rho = np.asarray(rho, dtype=float)[..., None]
            kld = 0.5 * np.sum(rho * gm1 - np.log1p(rho * gm1), axis=-1)
            return np.sqrt(np.maximum(2.0 * kld, 0.0))

        d_half = float(dist(0.5))
        d_one = float(dist(1.0 - 1e-9))

        def median_gap(theta):
            return (1.0 - np.exp(-theta * d_half)) - 0.5 * (1.0 - np.exp(-theta * d_one))

        lo, hi = 1e-6, 1e4
        if median_gap(lo) * median_gap(hi) < 0:
            theta = float(brentq(median_gap, lo, hi))
        else:
            theta = math.log(2.0) / d_half
        grid = np.linspace(1e-6, 1.0 - 1e-6, 4001)
        d = dist(grid)
        dd = np.gradient(d, grid)
        log_norm = math.log1p(-math.exp(-theta * d_one))
        logp = math.log(theta) - theta * d + np.log(np.maximum(dd, 1e-300)) - log_norm
        return MixingPrior(log_spline=CubicSpline(grid, logp), theta=theta)

    def logpdf(self, rho: float) -> float:
        if not (0.0 < rho < 1.0):
            return -np.inf
        return float(self.log_spline(rho))

    def dlogpdf(self, rho: float) -> float:
        return float(self.log_spline(rho, 1))


# -- model specification ----------------------------------------------------------

VARIANTS = ("I", "II", "III")


@dataclass(frozen=True)
class ModelSpec:
    """Which response is modeled and how each effect block is structured.

    ``structures`` maps factor name -> one of {"iid", "ar1", "none"}; factors
    not mentioned default to "iid".  iid blocks (and the intercept) share one
    pooled precision.  ``fixed`` pins internal-scale hyperparameters to
    constants, removing them from the free vector (used by test fixtures and
    degenerate models).
    """

    event: str
    variant: str = "I"
    intercept: bool = True
    structures: tuple[tuple[str, str], ...] = ()
    spatial: bool = True
    pc: PCPrior = PCPrior(1.0, 0.1)
    rho_trans_precision: float = 0.15
    rho_reg_prior: str = "pc"
    fixed: tuple[tuple[str, float], ...] = ()

    def structure(self, factor: str) -> str:
        for name, s in self.structures:
            if name == factor:
                return s
        return "iid"

    def fixed_map(self) -> dict[str, float]:
        return dict(self.fixed)


def variant_spec(variant: str, event: str, schema: CategoricalSchema, **overrides) -> ModelSpec:
    """The paper's three model configurations.

    (I) AR1 effects for ordinal factors plus the spatial field, (II) all-iid
    effects plus the spatial field, (III) all-iid effects, no spatial field.
    """
    if variant not in VARIANTS:
        raise ModelError(f"unknown variant {variant!r} (expected one of {VARIANTS})")
    structures: tuple[tuple[str, str], ...] = ()
    if variant == "I":
        structures = tuple((f.name, "ar1") for f in schema.factors if f.ordinal)
    spatial = variant in ("I", "II") and schema.spatial_factor is not None
    return ModelSpec(event=event, variant=variant, structures=structures, spatial=spatial, **overrides)


def parse_model_spec(text: str, default_event: str | None = None) -> ModelSpec:
    """Parse the model spec text format.

    Directives (one per line, ``#`` comments): ``event <name>``,
    ``variant I|II|III``, ``structure <factor> iid|ar1|none``,
    ``spatial on|off``, ``intercept on|off``, ``pc_prior <u> <alpha>``,
    ``rho_precision <tau>``, ``rho_reg_prior pc|uniform``,
    ``fix <hyper> <internal value>``.
    """
    event = default_event
    variant = "I"
    structures: dict[str, str] = {}
    spatial: bool | None = None
    intercept = True
    pc = PCPrior()
    rho_prec = 0.15
    rho_reg_prior = "pc"
    fixed: dict[str, float] = {}
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        key = words[0]
        try:
            if key == "event":
                event = words[1]
            elif key == "variant":
                variant = words[1]
            elif key == "structure":
                if words[2] not in ("iid", "ar1", "none"):
                    raise ModelError(f"bad structure {words[2]!r}")
                structures[words[1]] = words[2]
            elif key == "spatial":
                spatial = words[1] == "on"
            elif key == "intercept":
                intercept = words[1] == "on"
            elif key == "pc_prior":
                pc = PCPrior(float(words[1]), float(words[2]))
            elif key == "rho_precision":
                rho_prec = float(words[1])
            elif key == "rho_reg_prior":
                if words[1] not in ("pc", "uniform"):
                    raise ModelError(f"bad rho_reg_prior {words[1]!r}")
                rho_reg_prior = words[1]
            elif key == "fix":
                fixed[words[1]] = float(words[2])
            else:
                raise ModelError(f"unknown model-spec directive {key!r}")
        except (IndexError, ValueError) as exc:
            raise ModelError(f"cannot parse model-spec line {raw!r}") from exc
    if event is None:
        raise ModelError("model spec names no event")
    if variant not in VARIANTS:
        raise ModelError(f"unknown variant {variant!r}")
    if variant == "II":
        structures = {k: ("iid" if v == "ar1" else v) for k, v in structures.items()}
    if variant == "III":
        structures = {k: ("iid" if v == "ar1" else v) for k, v in structures.items()}
        spatial = False if spatial is None else spatial
    return ModelSpec(
        event=event,
        variant=variant,
        intercept=intercept,
        structures=tuple(sorted(structures.items())),
        spatial=True if spatial is None else spatial,
        pc=pc,
        rho_trans_precision=rho_prec,
        rho_reg_prior=rho_reg_prior,
        fixed=tuple(sorted(fixed.items())),
    )


# -- internal-scale transforms -----------------------------------------------------


def rho_from_trans(t: float) -> float:
    return math.tanh(0.5 * t)


def trans_from_rho(rho: float) -> float:
    return math.log((1.0 + rho) / (1.0 - rho))


@dataclass(frozen=True)
class LatentState:
    """Public view of the latent vector, with phi expanded onto the nodes."""

    values: np.ndarray
    names: tuple[str, ...]

    def __getitem__(self, name: str) -> float:
        return float(self.values[self.names.index(name)])


# -- latent layout ------------------------------------------------------------------


class LatentLayout:
    """Compiled (schema, spec) pair: block offsets, design, priors.

    Pure functions of the hyperparameters; safe to share across threads.
    """

    def __init__(self, schema: CategoricalSchema, spec: ModelSpec):
        self.schema = schema
        self.spec = spec
        iid_idx: list[int] = []
        coord_names: list[str] = []
        self.ar1_blocks: list[tuple[str, slice]] = []
        pos = 0
        if spec.intercept:
            iid_idx.append(pos)
            coord_names.append("intercept")
            pos += 1
        self.factor_slices: dict[str, slice] = {}
        for f in schema.factors:
            structure = spec.structure(f.name)
            if structure == "none":
                continue
            sl = slice(pos, pos + f.n_levels)
            self.factor_slices[f.name] = sl
            coord_names.extend(f"{f.name}={lvl}" for lvl in f.levels)
            if structure == "ar1":
                if not f.ordinal:
                    raise ModelError(f"AR1 structure on non-ordinal factor {f.name!r}")
                self.ar1_blocks.append((f.name, sl))
            else:
                iid_idx.extend(range(pos, pos + f.n_levels))
            pos += f.n_levels
        self.iid_idx = np.array(iid_idx, dtype=np.intp)
        self.spatial: Bym2Block | None = None
        self.omega_slice = self.z_slice = slice(pos, pos)
        if spec.spatial:
            block = bym2_block(schema)
            self.spatial = block
            self.omega_slice = slice(pos, pos + block.n_nodes)
            coord_names.extend(f"omega:{n}" for n in block.nodes)
            pos += block.n_nodes
            self.z_slice = slice(pos, pos + block.n_nodes - 1)
            coord_names.extend(f"spatial_z:{k}" for k in range(block.n_nodes - 1))
            pos += block.n_nodes - 1
        self.n_latent = pos
        self.coord_names = tuple(coord_names)
        if self.n_latent == 0:
            raise ModelError("model has no latent effects")

        names: list[str] = []
        if self.iid_idx.size:
            names.append("log_tau_pr")
        for fname, _ in self.ar1_blocks:
            names.extend((f"log_tau_{fname}", f"trho_{fname}"))
        if self.spatial is not None:
            names.extend(("log_tau_reg", "logit_rho_reg"))
        fixed = spec.fixed_map()
        unknown = set(fixed) - set(names)
        if unknown:
            raise ModelError(f"fixed hyperparameters not in model: {sorted(unknown)}")
        self.all_hyper_names = tuple(names)
        self.hyper_names = tuple(n for n in names if n not in fixed)
        self._fixed = fixed
        self._base_design = self._build_base_design()

    # -- hyperparameters ------------------------------------------------------

    @property
    def n_hyper(self) -> int:
        return len(self.hyper_names)

    def lam_dict(self, lam: np.ndarray) -> dict[str, float]:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if lam.shape != (self.n_hyper,):
            raise ModelError(
                f"expected {self.n_hyper} hyperparameters {self.hyper_names}, got {lam.shape}"
            )
        out = dict(self._fixed)
        out.update(zip(self.hyper_names, lam.tolist()))
        return out

    def init_lam(self) -> np.ndarray:
        defaults = {"log_tau": 2.0, "trho": 0.0, "logit": 0.0}
        vals = []
        for name in self.hyper_names:
            key = "logit" if name.startswith("logit") else ("trho" if name.startswith("trho") else "log_tau")
            vals.append(defaults[key])
        return np.array(vals)

    # -- design -----------------------------------------------------------------

    def _build_base_design(self) -> np.ndarray:
        P = self.schema.n_cells
        a = np.zeros((P, self.n_latent))
        if self.spec.intercept:
            a[:, 0] = 1.0
        idx = self.schema.level_index_matrix()
        for j, f in enumerate(self.schema.factors):
            sl = self.factor_slices.get(f.name)
            if sl is None:
                continue
            a[np.arange(P), sl.start + idx[:, j]] = 1.0
        if self.spatial is not None:
            node = self.schema.node_index_per_cell()
            ind = np.zeros((P, self.spatial.n_nodes))
            ind[np.arange(P), node] = 1.0
            a[:, self.omega_slice] = ind
            a[:, self.z_slice] = ind @ self.spatial.eigvecs
        return a

    def design(self, lam: np.ndarray) -> np.ndarray:
        """(P, n_latent) design at internal hyperparameters lam."""
        a = self._base_design
        if self.spatial is None:
            return a
        d = self.lam_dict(lam)
        tau = math.exp(d["log_tau_reg"])
        rho = float(expit(d["logit_rho_reg"]))
        a = a.copy()
        a[:, self.omega_slice] *= math.sqrt((1.0 - rho) / tau)
        a[:, self.z_slice] *= math.sqrt(rho / tau)
        return a

    def incidence(self, cid: int) -> tuple[str, ...]:
        """Names of the latent effects a cell's design row touches.

        One entry per indicator hit (intercept plus one level per modeled
        factor) and one ``spatial:<node>`` entry for the BYM2 contribution.
        """
        names: list[str] = []
        if self.spec.intercept:
            names.append("intercept")
        levels = dict(zip(self.schema.factor_names, self.schema.cell_levels(cid)))
        for f in self.schema.factors:
            if f.name in self.factor_slices:
                names.append(f"{f.name}={levels[f.name]}")
        if self.spatial is not None:
            names.append(f"spatial:{self.schema.node_of_cell(cid)}")
        return tuple(names)

    # -- prior ---------------------------------------------------------------------

    def prior_precision(self, lam: np.ndarray) -> tuple[np.ndarray, float]:
        """Dense prior precision of the latent vector and its log determinant."""
        d = self.lam_dict(lam)
        q = np.zeros((self.n_latent, self.n_latent))
        logdet = 0.0
        if self.iid_idx.size:
            tau = math.exp(d["log_tau_pr"])
            q[self.iid_idx, self.iid_idx] = tau
            logdet += self.iid_idx.size * d["log_tau_pr"]
        for fname, sl in self.ar1_blocks:
            tau = math.exp(d[f"log_tau_{fname}"])
            rho = rho_from_trans(d[f"trho_{fname}"])
            n = sl.stop - sl.start
            q[sl, sl] = ar1_precision(n, rho, tau).toarray()
            logdet += ar1_logdet(n, rho, tau)
        if self.spatial is not None:
            om = np.arange(self.omega_slice.start, self.omega_slice.stop)
            q[om, om] = 1.0
            zz = np.arange(self.z_slice.start, self.z_slice.stop)
            q[zz, zz] = self.spatial.eigvals
            logdet += float(np.sum(np.log(self.spatial.eigvals)))
        return q, logdet

    def hyper_logprior(self, lam: np.ndarray) -> float:
        """Log prior density of the free hyperparameters on the internal scale.

        Includes every change-of-variable Jacobian: PC-prior terms are stated
        on each block's anchored standard deviation, AR1 correlations carry a
        Gaussian on log((1+rho)/(1-rho)), and the mixing proportion uses the
        tabulated PC-type prior (or the uniform fallback) plus the logit
        Jacobian.
        """
        d = self.lam_dict(lam)
        pc = self.spec.pc
        out = 0.0
        for name in self.hyper_names:
            x = d[name]
            if name.startswith("log_tau"):
                if not np.isfinite(x) or abs(x) > 40.0:
                    return -np.inf
                sigma = math.exp(-0.5 * x)
                out += math.log(pc.rate) - pc.rate * sigma + math.log(0.5 * sigma)
            elif name.startswith("trho"):
                prec = self.spec.rho_trans_precision
                out += 0.5 * math.log(prec) - 0.5 * LOG_2PI - 0.5 * prec * x * x
            else:  # logit_rho_reg
                if not np.isfinite(x) or abs(x) > 40.0:
                    return -np.inf
                rho = float(expit(x))
                jac = math.log(rho) + math.log1p(-rho)
                if self.spec.rho_reg_prior == "uniform":
                    out += jac
                else:
                    out += self.spatial.mixing_pc_table.logpdf(rho) + jac
        return out

    def hyper_logprior_grad(self, lam: np.ndarray) -> np.ndarray:
        """Analytic gradient of :meth:`hyper_logprior` wrt the free vector."""
        d = self.lam_dict(lam)
        pc = self.spec.pc
        grad = np.zeros(self.n_hyper)
        for i, name in enumerate(self.hyper_names):
            x = d[name]
            if name.startswith("log_tau"):
                sigma = math.exp(-0.5 * x)
                grad[i] = 0.5 * pc.rate * sigma - 0.5
            elif name.startswith("trho"):
                grad[i] = -self.spec.rho_trans_precision * x
            else:
                rho = float(expit(x))
                drho = rho * (1.0 - rho)
                grad[i] = 1.0 - 2.0 * rho
                if self.spec.rho_reg_prior != "uniform":
                    grad[i] += self.spatial.mixing_pc_table.dlogpdf(rho) * drho
        return grad

    # -- public latent view -----------------------------------------------------------

    def public_state(self, gamma: np.ndarray) -> LatentState:
        """Expand the internal latent vector to the public (phi-based) view."""
        gamma = np.asarray(gamma, dtype=float)
        if self.spatial is None:
            return LatentState(values=gamma.copy(), names=self.coord_names)
        head = gamma[: self.z_slice.start]
        phi = self.spatial.eigvecs @ gamma[self.z_slice]
        names = self.coord_names[: self.z_slice.start] + tuple(
            f"phi:{n}" for n in self.spatial.nodes
        )
        return LatentState(values=np.concatenate([head, phi]), names=names)


def design_row(schema: CategoricalSchema, spec: ModelSpec, cid: int) -> tuple[str, ...]:
    """Sparse incidence of one cell's design row (see LatentLayout.incidence)."""
    return LatentLayout(schema, spec).incidence(cid)
