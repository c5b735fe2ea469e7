"""Query-counted LP approximation laboratory for bounded-degree CSPs."""

from .csp import (
    Constraint,
    ConstraintOracle,
    CspInstance,
    Predicate,
    brute_force_opt,
    build_instance,
    distance_to_satisfiability,
    evaluate,
    load_instance,
    save_instance,
    sum_estimator,
)

__all__ = [
    "Constraint",
    "ConstraintOracle",
    "CspInstance",
    "Predicate",
    "brute_force_opt",
    "build_instance",
    "distance_to_satisfiability",
    "evaluate",
    "load_instance",
    "save_instance",
    "sum_estimator",
]

__version__ = "0.1.0"
