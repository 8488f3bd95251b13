"""Stochastic model-based minimization for weakly convex losses |c(x)|."""

from ._smod import (
    ProblemInstance,
    absolute_linear,
    blind_deconvolution,
    expectation_gap,
    load_instance,
    log_grid,
    loss,
    make_instance,
    max_curvature,
    model_value,
    moreau_grad_norm,
    moreau_prox,
    phase_retrieval,
    prox_step,
    run,
    sample_subgradient,
    save_instance,
    stability,
    weak_convexity,
)

__all__ = [name for name in dir() if not name.startswith("_")]
