"""Egocentric 3D hand-pose forecasting."""

from ._core import (
    EgghandError,
    __version__,
    canonicalize,
    cvm_predict,
    evaluate,
    gradient_suite,
    load_samples,
    losses,
    lr_at,
    metrics,
    stratify_top_fraction,
    synth,
    train,
)

__all__ = [
    "EgghandError",
    "__version__",
    "canonicalize",
    "cvm_predict",
    "evaluate",
    "gradient_suite",
    "load_samples",
    "losses",
    "lr_at",
    "metrics",
    "stratify_top_fraction",
    "synth",
    "train",
]
