"""Synthetic control estimation on a parallelly shifted convex hull.

The package fits donor weights under simplex-style constraint families,
optionally with a free level-shift term, and quantifies uncertainty through
a spike-and-slab Bayesian model: Monte Carlo EM for the posterior mode,
exact-zero donor selection, and Gibbs sampling on the selected support.
"""

from __future__ import annotations

__version__ = "0.1.0"

from . import errors
from .bayes import (
    DonorPool,
    EffectPosterior,
    EMConfig,
    Hyperparams,
    MAPResult,
    McmcConfig,
    PosteriorDraws,
    VState,
    draw_gates,
    gate_probabilities,
    draw_noise_scale,
    effect_posterior,
    gibbs_sample,
    gibbs_weight_sweep,
    hpd_interval,
    mcem_map,
    select_donors,
)
from .estimators import (
    EffectSeries,
    SCMFit,
    counterfactual,
    fit_adh,
    fit_dinet,
    fit_lscm,
    fit_psconv,
    synthetic_path,
)
from .panel import (
    CovariateBlock,
    DesignMatrices,
    Panel,
    RowBlocks,
    build_design,
    load_panel,
    standardize_covariates,
    write_panel,
)
from .qp import (
    ConstraintSet,
    KKTReport,
    WeightSolution,
    kkt_certificate,
    solve_affine,
    solve_constrained,
)
from .sampling import (
    RngStream,
    bernoulli,
    inverse_gamma,
    normal_vec,
    truncated_normal,
    uniform,
)
from .simlab import SimConfig, SimResult, generate_dataset, run_replications

__all__ = [
    "__version__",
    "errors",
    # panel
    "Panel",
    "CovariateBlock",
    "RowBlocks",
    "DesignMatrices",
    "load_panel",
    "write_panel",
    "build_design",
    "standardize_covariates",
    # qp
    "ConstraintSet",
    "WeightSolution",
    "KKTReport",
    "solve_constrained",
    "solve_affine",
    "kkt_certificate",
    # estimators
    "SCMFit",
    "EffectSeries",
    "fit_adh",
    "fit_lscm",
    "fit_dinet",
    "fit_psconv",
    "counterfactual",
    "synthetic_path",
    # sampling
    "RngStream",
    "truncated_normal",
    "inverse_gamma",
    "bernoulli",
    "uniform",
    "normal_vec",
    # bayes
    "Hyperparams",
    "EMConfig",
    "McmcConfig",
    "VState",
    "MAPResult",
    "DonorPool",
    "PosteriorDraws",
    "EffectPosterior",
    "mcem_map",
    "select_donors",
    "gibbs_weight_sweep",
    "draw_noise_scale",
    "draw_gates",
    "gate_probabilities",
    "gibbs_sample",
    "effect_posterior",
    "hpd_interval",
    # simlab
    "SimConfig",
    "SimResult",
    "generate_dataset",
    "run_replications",
]
