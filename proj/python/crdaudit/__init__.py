"""Python access to the crdaudit core: losses, taxonomy, metrics, parsing and pipeline stages."""

from ._core import (
    Error,
    IoError,
    NotFoundError,
    ParseError,
    PreconditionError,
    Taxonomy,
    ValidationError,
    batch_mean,
    binary_metrics,
    dpo_grad,
    dpo_implicit_reward,
    dpo_loss,
    macro_average,
    multiclass_metrics,
    parse_generation,
    parse_prediction,
    round_half_up,
    run_stage,
    sft_loss,
    sigmoid,
    softplus,
)

__all__ = [
    "Error",
    "IoError",
    "NotFoundError",
    "ParseError",
    "PreconditionError",
    "Taxonomy",
    "ValidationError",
    "batch_mean",
    "binary_metrics",
    "dpo_grad",
    "dpo_implicit_reward",
    "dpo_loss",
    "macro_average",
    "multiclass_metrics",
    "parse_generation",
    "parse_prediction",
    "round_half_up",
    "run_stage",
    "sft_loss",
    "sigmoid",
    "softplus",
]
