"""Python bindings for the MARS toy-benchmark core."""

from ._core import (
    MarsError,
    agglomerative_cluster,
    balanced_accuracy,
    estimate_target_proportions,
    gen_toy,
    gmm_fit,
    importance_weights,
    lemma1_sup_ratio,
    optimal_assignment,
    solve_ot,
    train,
    wasserstein1,
)

__all__ = [
    "MarsError",
    "agglomerative_cluster",
    "balanced_accuracy",
    "estimate_target_proportions",
    "gen_toy",
    "gmm_fit",
    "importance_weights",
    "lemma1_sup_ratio",
    "optimal_assignment",
    "solve_ot",
    "train",
    "wasserstein1",
]
