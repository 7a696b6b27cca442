"""Interactive joint prediction and planning."""

from ._core import (
    CONFIG_SCHEMA,
    MRF_SCHEMA,
    TRACE_SCHEMA,
    CapacityError,
    ConfigError,
    DomainError,
    NumericError,
    PlanningError,
    ShapeError,
    check_gradient,
    cross_entropy,
    distill_class_loss,
    distill_reg_loss,
    evaluate,
    exact_marginals,
    integrate_maneuver,
    lbp_marginals,
    load_mrf,
    plan_scenario,
    sample_candidates,
    smooth_l1,
)

__version__ = "0.1.0"
