"""Image-to-LaTeX refinement toolkit (native core bindings)."""

from ._a2r2 import (  # noqa: F401
    ConfigError,
    Error,
    NoSalientRegion,
    ToolchainMissing,
    bleu4,
    central_eighth,
    composite_score,
    cw_ssim,
    edit_distance,
    edit_distance_raw,
    localize,
    pixel_match,
    render,
    rouge_l,
    rouge_n,
    run_scripted,
    select_subset,
    strip_model_markup,
    tokenize_latex,
)

__all__ = [
    "ConfigError",
    "Error",
    "NoSalientRegion",
    "ToolchainMissing",
    "bleu4",
    "central_eighth",
    "composite_score",
    "cw_ssim",
    "edit_distance",
    "edit_distance_raw",
    "localize",
    "pixel_match",
    "render",
    "rouge_l",
    "rouge_n",
    "run_scripted",
    "select_subset",
    "strip_model_markup",
    "tokenize_latex",
]
