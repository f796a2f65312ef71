"""FSG-Net retinal vessel segmentation."""

import torch  # noqa: F401  loads libtorch before the extension

from ._core import (
    DivergenceError,
    Model,
    PaddingRecord,
    ValidationError,
    attention_guided_coefficients,
    attention_guided_filter,
    auc,
    bce_loss,
    box_mean,
    confusion,
    count_parameters,
    dice_loss,
    format_delta,
    guided_filter,
    lr_at,
    padding_for,
    rank_average,
    reference_params_millions,
    score,
    variant_names,
)

__all__ = [
    "DivergenceError",
    "Model",
    "PaddingRecord",
    "ValidationError",
    "attention_guided_coefficients",
    "attention_guided_filter",
    "auc",
    "bce_loss",
    "box_mean",
    "confusion",
    "count_parameters",
    "dice_loss",
    "format_delta",
    "guided_filter",
    "lr_at",
    "padding_for",
    "rank_average",
    "reference_params_millions",
    "score",
    "variant_names",
]
