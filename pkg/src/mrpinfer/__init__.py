"""Survey inference engine.

Multilevel Bernoulli regression with structured latent Gaussian effects
(iid / AR1 / BYM2 blocks, PC hyperpriors), Laplace-approximation Bayesian
inference with grid integration over the hyperparameters, poststratification
of posterior cell draws to census cells, model-comparison scores (log
marginal likelihood, WAIC, modified quantile Brier score), latent-class
segmentation by EM-fitted mixtures of multinomials, and a synthetic-data
generator used as the test oracle.
"""

__version__ = "0.1.0"

from .census import CensusCellTable, load_census_csv, weights
from .cluster import MixtureModel, class_data_from_records, cluster_profiles, em_fit, select_k
from .criteria import ScoreReport, compare_models, mbrier, waic
from .inference import (
    CellLikelihood,
    InferenceConfig,
    PosteriorResult,
    conditional_mode,
    explore_grid,
    fit_event,
    hyper_logposterior,
    latent_marginals,
    mlik,
    sample_cells,
)
from .ingest import (
    Dataset,
    SurveyRecord,
    merge_and_split,
    parse_survey_csv,
    response_vector,
)
from .lgm import (
    LatentLayout,
    ModelSpec,
    PCPrior,
    ar1_precision,
    bym2_block,
    icar_precision,
    pc_prior_logdensity,
    variant_spec,
)
from .poststrat import (
    EstimandSummary,
    flag_official,
    marginal_panels,
    poststratify,
    summarize,
)
from .schema import CategoricalSchema, Selector, default_schema, load_schema, neighbours
from .synthgen import SynthSettings, SyntheticTruth, biased_sample, generate_truth
