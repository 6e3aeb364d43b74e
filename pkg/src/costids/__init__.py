"""Cost-sensitive intrusion detection on KDD'99-style connection records."""

__version__ = "0.1.0"

from .costs import (  # noqa: E402
    CostMatrix,
    Decision,
    alpha_cost_matrix,
    decide,
    decide_batch,
    expected_loss,
    expected_losses,
    kdd_cost_matrix,
    tradeoff_cost_matrix,
    zero_one_matrix,
)
from .evaluation import (  # noqa: E402
    BootstrapConfig,
    ConfusionCounts,
    alpha_sweep,
    bootstrap_ci,
    detection_metrics,
    empirical_cost,
    evaluate,
)
from .gmm import GaussianMixture, GmmClassifier, GmmHyperParams, fit_em, fit_priors, train_gmm_classifier  # noqa: E402
from .kdd import ClassLabel, FeatureEncoder, LabeledDataset, LabelMap, fit_encoder, parse_kdd_file  # noqa: E402
from .mlp import MlpClassifier, MlpHyperParams, MlpParams, forward, loss_and_gradient, train_mlp  # noqa: E402

__all__ = [
    "CostMatrix",
    "Decision",
    "alpha_cost_matrix",
    "decide",
    "decide_batch",
    "expected_loss",
    "expected_losses",
    "kdd_cost_matrix",
    "tradeoff_cost_matrix",
    "zero_one_matrix",
    "BootstrapConfig",
    "ConfusionCounts",
    "alpha_sweep",
    "bootstrap_ci",
    "detection_metrics",
    "empirical_cost",
    "evaluate",
    "GaussianMixture",
    "GmmClassifier",
    "GmmHyperParams",
    "fit_em",
    "fit_priors",
    "train_gmm_classifier",
    "ClassLabel",
    "FeatureEncoder",
    "LabeledDataset",
    "LabelMap",
    "fit_encoder",
    "parse_kdd_file",
    "MlpClassifier",
    "MlpHyperParams",
    "MlpParams",
    "forward",
    "loss_and_gradient",
    "train_mlp",
]
