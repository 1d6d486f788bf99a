"""The seven classifier families behind one probabilistic-prediction interface."""

from .artifact import load_model, save_model
from .core import (
    AdaBoostParams,
    DecisionTreeParams,
    GBDTParams,
    KNNParams,
    LinearSVMParams,
    MLPParams,
    ModelKind,
    RandomForestParams,
    TrainedModel,
    as_predict_fn,
    average_tree_probas,
    default_hyperparams,
    hyperparams_from_dict,
    input_gradient,
    predict_labels,
    predict_proba,
    train,
)
from .mlp import MLPNet

__all__ = [
    "AdaBoostParams", "DecisionTreeParams", "GBDTParams", "KNNParams", "LinearSVMParams", "MLPNet",
    "MLPParams", "ModelKind", "RandomForestParams", "TrainedModel", "as_predict_fn",
    "average_tree_probas", "default_hyperparams", "hyperparams_from_dict", "input_gradient",
    "load_model", "predict_labels", "predict_proba", "save_model", "train",
]
