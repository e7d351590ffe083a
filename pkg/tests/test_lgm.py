import math

import numpy as np
import pytest
from scipy.integrate import quad

from mrpinfer.errors import ModelError
from mrpinfer.lgm import (
    LatentLayout,
    ModelSpec,
    PCPrior,
    ar1_logdet,
    ar1_precision,
    bym2_block,
    design_row,
    icar_precision,
    parse_model_spec,
    pc_prior_logdensity,
    rho_from_trans,
    variant_spec,
)
from mrpinfer.schema import CategoricalSchema, FactorDef


# -- AR1 ---------------------------------------------------------------------------


def test_ar1_identity_at_rho_zero():
    q = ar1_precision(3, 0.0, 1.0).toarray()
    assert np.allclose(q, np.eye(3), atol=1e-15)


def test_ar1_inverse_matches_analytic_covariance():
    q = ar1_precision(3, 0.5, 1.0).toarray()
    cov = np.array([[1.0, 0.5, 0.25], [0.5, 1.0, 0.5], [0.25, 0.5, 1.0]])
    assert np.max(np.abs(q @ cov - np.eye(3))) < 1e-12


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
@pytest.mark.parametrize("rho", [-0.8, -0.3, 0.0, 0.4, 0.9])
@pytest.mark.parametrize("tau", [0.5, 1.0, 2.7])
def test_ar1_dense_inversion_grid(n, rho, tau):
    q = ar1_precision(n, rho, tau).toarray()
    idx = np.arange(n)
    cov = (rho ** np.abs(idx[:, None] - idx[None, :])) / tau
    assert np.max(np.abs(q @ cov - np.eye(n))) < 1e-10
    sign, logdet = np.linalg.slogdet(q)
    assert sign > 0
    assert abs(logdet - ar1_logdet(n, rho, tau)) < 1e-10


def test_ar1_positive_definite_age_block():
    for rho, tau in [(-0.99, 0.01), (0.0, 100.0), (0.95, 3.0)]:
        np.linalg.cholesky(ar1_precision(5, rho, tau).toarray())


def test_ar1_rejects_bad_parameters():
    with pytest.raises(ModelError):
        ar1_precision(5, 1.0, 1.0)
    with pytest.raises(ModelError):
        ar1_precision(1, 0.5, 1.0)
    with pytest.raises(ModelError):
        ar1_precision(5, 0.5, -1.0)


# -- ICAR / BYM2 -------------------------------------------------------------------


def test_icar_path_graph_by_hand():
    q = icar_precision(("a", "b"), {("a", "b")}).toarray()
    assert np.array_equal(q, np.array([[1.0, -1.0], [-1.0, 1.0]]))


def test_icar_cycle4_by_hand():
    nodes = ("a", "b", "c", "d")
    edges = {("a", "b"), ("b", "c"), ("c", "d"), ("a", "d")}
    q = icar_precision(nodes, edges).toarray()
    expected = np.array(
        [
            [2.0, -1.0, 0.0, -1.0],
            [-1.0, 2.0, -1.0, 0.0],
            [0.0, -1.0, 2.0, -1.0],
            [-1.0, 0.0, -1.0, 2.0],
        ]
    )
    assert np.array_equal(q, expected)


def test_default_graph_icar_row_sums_zero(schema):
    q = icar_precision(schema.nodes, schema.edges).toarray()
    assert np.allclose(q.sum(axis=1), 0.0, atol=1e-14)
    assert np.allclose(q, q.T)


def test_bym2_scaling_geometric_mean_one(schema):
    block = bym2_block(schema)
    variances = np.diag(block.phi_marginal_cov())
    assert abs(np.mean(np.log(variances))) < 1e-10


def test_bym2_rho_zero_is_iid(schema):
    block = bym2_block(schema)
    tau = 2.4
    cov = block.delta_cov(tau, 0.0)
    assert np.max(np.abs(cov - np.eye(6) / tau)) < 1e-10


def test_bym2_mixing_prior_normalized(schema):
    block = bym2_block(schema)
    prior = block.mixing_pc_table
    total, _ = quad(lambda r: math.exp(prior.logpdf(r)), 1e-6, 1.0 - 1e-6, limit=200)
    assert abs(total - 1.0) < 1e-3
    below, _ = quad(lambda r: math.exp(prior.logpdf(r)), 1e-6, 0.5, limit=200)
    assert abs(below - 0.5) < 1e-2  # median calibration


# -- PC prior -----------------------------------------------------------------------


def test_pc_prior_zero_limit():
    val = pc_prior_logdensity(PCPrior(1.0, 0.1), 1e-12)
    assert abs(val - math.log(-math.log(0.1))) < 1e-9


def test_pc_prior_tail_calibration():
    prior = PCPrior(1.0, 0.1)
    tail, _ = quad(lambda s: math.exp(pc_prior_logdensity(prior, s)), 1.0, 60.0)
    assert abs(tail - 0.1) < 1e-8


def test_pc_prior_rate_halves_when_u_doubles():
    assert abs(PCPrior(2.0, 0.1).rate - 0.5 * PCPrior(1.0, 0.1).rate) < 1e-14


def test_pc_prior_rejects_bad_sigma():
    with pytest.raises(ModelError):
        pc_prior_logdensity(PCPrior(), 0.0)


# -- hyperprior on the internal scale -------------------------------------------------


def test_hyper_logprior_rho_mode_term(schema):
    spec = variant_spec("I", "t", schema)
    layout = LatentLayout(schema, spec)
    lam = layout.init_lam()
    i = layout.hyper_names.index("trho_age")
    lam2 = lam.copy()
    lam2[i] = 1.3
    # difference isolates the Gaussian term on the transformed correlation
    delta = layout.hyper_logprior(lam) - layout.hyper_logprior(lam2)
    assert abs(delta - 0.5 * 0.15 * 1.3**2) < 1e-12


def test_hyper_logprior_boundary_minus_inf(schema):
    spec = variant_spec("I", "t", schema)
    layout = LatentLayout(schema, spec)
    lam = layout.init_lam()
    lam[layout.hyper_names.index("log_tau_pr")] = 50.0
    assert layout.hyper_logprior(lam) == -np.inf


@pytest.mark.parametrize("rho_reg_prior", ["pc", "uniform"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_hyper_logprior_gradient_fd(schema, seed, rho_reg_prior):
    spec = variant_spec("I", "t", schema, rho_reg_prior=rho_reg_prior)
    layout = LatentLayout(schema, spec)
    rng = np.random.default_rng(seed)
    lam = rng.normal(0.0, 1.0, layout.n_hyper)
    grad = layout.hyper_logprior_grad(lam)
    h = 1e-6
    for i in range(layout.n_hyper):
        e = np.zeros(layout.n_hyper)
        e[i] = h
        fd = (layout.hyper_logprior(lam + e) - layout.hyper_logprior(lam - e)) / (2 * h)
        assert abs(fd - grad[i]) < 1e-6 * max(1.0, abs(grad[i]))


# -- layout / design -----------------------------------------------------------------


def test_model_I_layout_dimensions(schema):
    layout = LatentLayout(schema, variant_spec("I", "t", schema))
    assert layout.n_latent == 33  # 22 effects + 6 omega + 5 sum-zero spatial coords
    assert layout.hyper_names == (
        "log_tau_pr",
        "log_tau_age",
        "trho_age",
        "log_tau_education",
        "trho_education",
        "log_tau_reg",
        "logit_rho_reg",
    )
    state = layout.public_state(np.zeros(33))
    assert len(state.values) == 34  # 21 levels + intercept + 6 omega + 6 phi
    assert state.names[-6:] == tuple(f"phi:{n}" for n in layout.spatial.nodes)


def test_variant_hyper_counts(schema):
    assert LatentLayout(schema, variant_spec("II", "t", schema)).n_hyper == 3
    assert LatentLayout(schema, variant_spec("III", "t", schema)).n_hyper == 1


def test_design_row_incidence(schema):
    spec = variant_spec("I", "t", schema)
    row = design_row(schema, spec, 0)
    assert row[0] == "intercept"
    assert len(row) == 7  # intercept + 5 factor levels + 1 spatial node
    assert row[-1].startswith("spatial:")


def test_design_row_minsk_city_hits_minsk_node(schema):
    spec = variant_spec("I", "t", schema)
    cid = schema.cell_id(
        {"gender": "female", "region": "minsk_city", "age": "41-50",
         "education": "higher", "area": "urban"}
    )
    assert "spatial:minsk" in design_row(schema, spec, cid)


def test_design_rows_differ_only_in_gender(schema):
    spec = variant_spec("I", "t", schema)
    layout = LatentLayout(schema, spec)
    base = {"region": "brest", "age": "18-30", "education": "higher", "area": "urban"}
    a = layout._base_design[schema.cell_id({"gender": "male", **base})]
    b = layout._base_design[schema.cell_id({"gender": "female", **base})]
    assert int(np.sum(a != b)) == 2


def test_design_column_sums(schema):
    layout = LatentLayout(schema, variant_spec("I", "t", schema))
    a = layout._base_design
    col = 1  # first gender level
    for f in schema.factors:
        sl = layout.factor_slices[f.name]
        sums = a[:, sl].sum(axis=0)
        assert np.all(sums == schema.n_cells / f.n_levels)


def test_prior_precision_pd_on_hyper_grid(schema):
    layout = LatentLayout(schema, variant_spec("I", "t", schema))
    rng = np.random.default_rng(7)
    for _ in range(12):
        lam = rng.normal(0.0, 1.5, layout.n_hyper)
        q, logdet = layout.prior_precision(lam)
        np.linalg.cholesky(q)
        assert abs(logdet - np.linalg.slogdet(q)[1]) < 1e-8
        assert np.allclose(q, q.T)


def test_spatial_design_scaling(schema):
    layout = LatentLayout(schema, variant_spec("I", "t", schema))
    lam = layout.init_lam()
    d = layout.lam_dict(lam)
    tau = math.exp(d["log_tau_reg"])
    rho = 1.0 / (1.0 + math.exp(-d["logit_rho_reg"]))
    a = layout.design(lam)
    omega = a[:, layout.omega_slice]
    nz = omega[omega != 0]
    assert np.allclose(nz, math.sqrt((1 - rho) / tau))


def test_rho_transform_round_trip():
    for rho in (-0.9, -0.2, 0.0, 0.5, 0.99):
        t = math.log((1 + rho) / (1 - rho))
        assert abs(rho_from_trans(t) - rho) < 1e-12


# -- model spec files -----------------------------------------------------------------


def test_parse_model_spec_variants(schema):
    spec = parse_model_spec("event early_voting\nvariant III\n")
    assert spec.variant == "III" and not spec.spatial
    spec2 = parse_model_spec("event x\nstructure age iid\nspatial off\nfix log_tau_pr 0.0\n")
    assert spec2.structure("age") == "iid"
    assert not spec2.spatial
    assert spec2.fixed_map() == {"log_tau_pr": 0.0}


def test_parse_model_spec_errors():
    with pytest.raises(ModelError):
        parse_model_spec("variant IV\nevent x\n")
    with pytest.raises(ModelError):
        parse_model_spec("")
    with pytest.raises(ModelError):
        parse_model_spec("event x\nstructure age weird\n")
    with pytest.raises(ModelError):
        parse_model_spec("event x\nbogus directive\n")


def test_ar1_on_nominal_factor_rejected():
    schema = CategoricalSchema(factors=(FactorDef("g", ("a", "b"), False),))
    spec = ModelSpec(event="t", structures=(("g", "ar1"),), spatial=False)
    with pytest.raises(ModelError):
        LatentLayout(schema, spec)


def test_fixed_unknown_hyper_rejected(schema):
    spec = variant_spec("III", "t", schema, fixed=(("log_tau_reg", 0.0),))
    with pytest.raises(ModelError):
        LatentLayout(schema, spec)
