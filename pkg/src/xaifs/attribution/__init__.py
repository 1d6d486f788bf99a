"""Per-sample, per-class feature attributions and their global summaries."""

from .gradients import deconvnet_relu, gradient_input, integrated_gradients, noise_ensemble, saliency
from .matrix import (
    XPLIQUE_METHODS,
    AttributionMatrix,
    GlobalImportance,
    XpliqueConfig,
    explain_kernel_shap,
    explain_method,
    global_importance,
)
from .perturbation import lime_tabular, occlusion
from .shapley import (
    ALL,
    BackgroundSet,
    ShapleyResult,
    coalition_values,
    exact_shapley_oracle,
    kernel_shap,
    shapley_from_value_function,
)

__all__ = [
    "ALL", "AttributionMatrix", "BackgroundSet", "GlobalImportance", "ShapleyResult", "XPLIQUE_METHODS",
    "XpliqueConfig", "coalition_values", "deconvnet_relu", "exact_shapley_oracle", "explain_kernel_shap",
    "explain_method", "global_importance", "gradient_input", "integrated_gradients", "kernel_shap",
    "lime_tabular", "noise_ensemble", "occlusion", "saliency", "shapley_from_value_function",
]
