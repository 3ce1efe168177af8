"""Hierarchical multi-task learning engine (two-level make/model classification)."""

from ._hiertask import (
    Taxonomy,
    accounting,
    consistency_rate,
    cross_entropy,
    cross_entropy_grad,
    derived_make_accuracy,
    evaluate_checkpoint,
    generate_synthetic,
    model_accuracy,
    one_cycle_lr,
    run_experiment,
    top_k_accuracy,
)

__all__ = [
    "Taxonomy",
    "accounting",
    "consistency_rate",
    "cross_entropy",
    "cross_entropy_grad",
    "derived_make_accuracy",
    "evaluate_checkpoint",
    "generate_synthetic",
    "model_accuracy",
    "one_cycle_lr",
    "run_experiment",
    "top_k_accuracy",
]
