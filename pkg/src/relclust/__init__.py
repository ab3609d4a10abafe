"""Discriminative clustering from relative similarity constraints with
yes/no/don't-know answers."""

from .core import (
    CL,
    DNK,
    ML,
    NO,
    YES,
    ConstraintSet,
    Dataset,
    HyperParams,
    NumericalError,
    SoftmaxCache,
    TripletConstraint,
    Weights,
    constraint_label_prob,
    softmax,
)
from .data import load_csv, make_blobs, save_csv, standardize
from .em import ClusteringResult, KmeansResult, fit, init_weights, kmeans, load_model, predict, save_model
from .estep import Posterior, compat, hard_update, mean_field_update, run_estep
from .infotheory import brute_force_mi, mi_table, pairwise_mi, relative_mi, relative_yn_mi
from .metrics import ari, constraint_accuracy, nmi, pairwise_f_measure
from .mstep import ObjectiveBreakdown, eval_objective, gradient, maximize
from .oracle import (
    PairConstraint,
    derive_pairs,
    label_pair,
    label_triplet,
    read_constraints,
    sample_constraints,
    write_constraints,
)
from .tuning import TuneResult, tune

__version__ = "0.1.0"

__all__ = [
    "CL",
    "DNK",
    "ML",
    "NO",
    "YES",
    "ClusteringResult",
    "ConstraintSet",
    "Dataset",
    "HyperParams",
    "KmeansResult",
    "NumericalError",
    "ObjectiveBreakdown",
    "PairConstraint",
    "Posterior",
    "SoftmaxCache",
    "TripletConstraint",
    "TuneResult",
    "Weights",
    "ari",
    "brute_force_mi",
    "compat",
    "constraint_accuracy",
    "constraint_label_prob",
    "derive_pairs",
    "eval_objective",
    "fit",
    "gradient",
    "hard_update",
    "init_weights",
    "kmeans",
    "label_pair",
    "label_triplet",
    "load_csv",
    "load_model",
    "make_blobs",
    "maximize",
    "mean_field_update",
    "mi_table",
    "nmi",
    "pairwise_f_measure",
    "pairwise_mi",
    "predict",
    "read_constraints",
    "relative_mi",
    "relative_yn_mi",
    "run_estep",
    "sample_constraints",
    "save_csv",
    "save_model",
    "softmax",
    "standardize",
    "tune",
    "write_constraints",
]
