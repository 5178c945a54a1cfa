"""Dimensions and dimension-corrected scores for latent tree models.

Thin wrappers over the C++ core; report-producing calls return plain dicts
parsed from the core's JSON output.
"""

import json as _json

from ._core import (
    Dataset,
    Model,
    Parameters,
    UnreliableRankError,
    dataset_from_csv,
    deterministic_block_parameters,
    effective_dim_numeric,
    em_fit,
    hlc_sample_ladder,
    kl_divergence_bits,
    lc_sample_ladder,
    standard_dim_bound_applies,
    loglik,
    observed_marginal,
    parse_model,
    random_parameters,
    run_experiment,
    sample_dataset,
    binary_tree_effective_dim,
    two_var_effective_dim,
)
from . import _core as _c

__all__ = [
    "Dataset",
    "Model",
    "Parameters",
    "UnreliableRankError",
    "bounds",
    "dataset_from_csv",
    "deterministic_block_parameters",
    "dimension_report",
    "effective_dim_numeric",
    "em_fit",
    "hillclimb_hlc_cardinality",
    "hlc_sample_ladder",
    "kl_divergence_bits",
    "lc_sample_ladder",
    "standard_dim_bound_applies",
    "loglik",
    "observed_marginal",
    "parse_model",
    "random_parameters",
    "run_experiment",
    "sample_dataset",
    "score_model",
    "select_lc_cardinality",
    "binary_tree_effective_dim",
    "two_var_effective_dim",
]


def bounds(model):
    """Closed-form ds, dc, dp, db bounds for an LC model."""
    return _json.loads(_c.bounds_json(model))


def dimension_report(model, draws=10, seed=0, method="auto"):
    """Full dimension report: bounds, decomposition, and the numeric rank."""
    return _json.loads(_c.dimension_report_json(model, draws, seed, method))


def score_model(model, dataset, score, dim_source="auto", **kwargs):
    """Fit by EM and score; returns the report with its component breakdown."""
    return _json.loads(_c.score_model_json(model, dataset, score, dim_source, **kwargs))


def select_lc_cardinality(observed_cards, dataset, score, lo, hi, **kwargs):
    """Scan LC hidden cardinalities in [lo, hi]; returns the search trace."""
    return _json.loads(_c.select_lc_cardinality_json(observed_cards, dataset, score, lo, hi, **kwargs))


def hillclimb_hlc_cardinality(topology, dataset, score, **kwargs):
    """Greedy per-node cardinality search from the all-binary start."""
    return _json.loads(_c.hillclimb_hlc_cardinality_json(topology, dataset, score, **kwargs))
