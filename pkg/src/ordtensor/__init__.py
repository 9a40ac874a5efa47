"""Low-rank tensor estimation from ordinal observations with a cumulative link model."""

__version__ = "0.1.0"

from .datagen import SamplingPlan, quantize_latent, sample_mask, simulate_ordinal, simulate_signal
from .estimator import FitOptions, FitResult, fit
from .likelihood import (OrdinalTensor, grad_cutoffs, grad_theta, hessian_theta_diag,
                         log_likelihood)
from .links import LinkConstants, LinkSpec, category_prob, default_cutoffs, link_constants
from .metrics import cluster_mode, kl_categorical, mad, mcr, mse, relative_mse, weighted_error
from .prediction import continuous_tucker_fit, predict_labels
from .selection import bic_score, effective_params, select_rank_bic
from .tensor import (TuckerFactors, frobenius_norm, hosvd, infinity_norm, mode_multiply, refold,
                     tucker_compose, unfold)

__all__ = [
    "SamplingPlan",
    "quantize_latent",
    "sample_mask",
    "simulate_ordinal",
    "simulate_signal",
    "FitOptions",
    "FitResult",
    "fit",
    "OrdinalTensor",
    "grad_cutoffs",
    "grad_theta",
    "hessian_theta_diag",
    "log_likelihood",
    "LinkConstants",
    "LinkSpec",
    "category_prob",
    "default_cutoffs",
    "link_constants",
    "cluster_mode",
    "kl_categorical",
    "mad",
    "mcr",
    "mse",
    "relative_mse",
    "weighted_error",
    "continuous_tucker_fit",
    "predict_labels",
    "bic_score",
    "effective_params",
    "select_rank_bic",
    "TuckerFactors",
    "frobenius_norm",
    "hosvd",
    "infinity_norm",
    "mode_multiply",
    "refold",
    "tucker_compose",
    "unfold",
]
