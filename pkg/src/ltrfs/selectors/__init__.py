"""Feature selection methods trained jointly with a neural ranker."""

from .common import (
    Selection,
    apply_mask,
    budget_size,
    extract_selection,
    measure_selected_count,
    top_indices,
    topk_mask,
)
from .regularized import (
    INVASE,
    LassoNet,
    TabNet,
    fit_lassonet_path,
    hier_prox,
    invase_step,
    lambda_path,
    lassonet_hierprox,
    tabnet_forward,
    tabnet_prior_update,
)
from .sampling import CAE, GL2X, IFG, L2X, cae_encode, gl2x_mask, ifg_select, l2x_mask, relaxed_topk

__all__ = [
    "CAE", "GL2X", "IFG", "INVASE", "L2X", "LassoNet", "Selection", "TabNet",
    "apply_mask", "budget_size", "cae_encode", "extract_selection", "fit_lassonet_path",
    "gl2x_mask", "hier_prox", "ifg_select", "invase_step", "l2x_mask", "lambda_path",
    "lassonet_hierprox", "measure_selected_count", "relaxed_topk", "tabnet_forward",
    "tabnet_prior_update", "top_indices", "topk_mask",
]
