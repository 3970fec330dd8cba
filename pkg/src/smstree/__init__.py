"""Copula tree models with speedy, Spearman's-rho based family selection."""

from smstree.copulas import (
    BivariateCopula,
    CopulaFamily,
    negative_entropy,
    rho_from_theta,
    theta_from_rho,
)
from smstree.curves import (
    CharacteristicCurve,
    FamilyPrior,
    build_curves,
    load_curves,
    save_curves,
    select_family,
)
from smstree.empirical import Dataset, pairwise_rho_matrix, read_csv, spearman_rho
from smstree.evaluation import (
    FittedModel,
    avg_test_logprob,
    crossval_report,
    edge_overlap,
    family_agreement,
    log_density,
)
from smstree.tree import (
    CopulaTree,
    LearnConfig,
    load_tree,
    max_spanning_tree,
    mle_edge_fit,
    mle_learn,
    save_tree,
    sms_learn,
)

__version__ = "0.1.0"

__all__ = [
    "BivariateCopula", "CharacteristicCurve", "CopulaFamily", "CopulaTree", "Dataset",
    "FamilyPrior", "FittedModel", "LearnConfig", "avg_test_logprob", "build_curves",
    "crossval_report", "edge_overlap", "family_agreement", "load_curves", "load_tree",
    "log_density", "max_spanning_tree", "mle_edge_fit", "mle_learn", "negative_entropy",
    "pairwise_rho_matrix", "read_csv", "rho_from_theta", "save_curves", "save_tree",
    "select_family", "sms_learn", "spearman_rho", "theta_from_rho",
]
