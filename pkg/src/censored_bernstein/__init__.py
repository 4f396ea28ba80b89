"""Censored Bernstein fractional calculus: kernels, operators, series
solvers and a Monte Carlo engine for the censored subordinator."""

from .bernstein import (
    ExplicitTriplet,
    Stable,
    TemperedStable,
    TripletClassification,
    classify_triplet,
    conjugate,
    eval_f,
    spec_from_dict,
    spec_to_dict,
)
from .errors import (
    CensoredBernsteinError,
    DomainError,
    HypothesisViolation,
    NonConvergenceError,
    NumericalError,
    ValidationError,
)
from .kernels import KernelPair, PairOptions, compute_q, make_pair, mismatched_pair, verify_sonine
from .ops import (
    Grid,
    GridFunction,
    OperatorKind,
    OperatorTable,
    apply_K,
    censored_derivative,
    kernel_j_density,
    operators_for,
    rl_derivative,
    rl_integral,
)
from .solver import (
    SeriesSolution,
    censored_integral,
    censored_integral_alt,
    lifetime_laplace,
    solve_censored_ivp,
    solve_resolvent,
    solve_resolvent_inhom,
)

__version__ = "0.1.0"

__all__ = [
    "ExplicitTriplet",
    "Stable",
    "TemperedStable",
    "TripletClassification",
    "classify_triplet",
    "conjugate",
    "eval_f",
    "spec_from_dict",
    "spec_to_dict",
    "CensoredBernsteinError",
    "DomainError",
    "HypothesisViolation",
    "NonConvergenceError",
    "NumericalError",
    "ValidationError",
    "KernelPair",
    "PairOptions",
    "compute_q",
    "make_pair",
    "mismatched_pair",
    "verify_sonine",
    "Grid",
    "GridFunction",
    "OperatorKind",
    "OperatorTable",
    "apply_K",
    "censored_derivative",
    "kernel_j_density",
    "operators_for",
    "rl_derivative",
    "rl_integral",
    "SeriesSolution",
    "censored_integral",
    "censored_integral_alt",
    "lifetime_laplace",
    "solve_censored_ivp",
    "solve_resolvent",
    "solve_resolvent_inhom",
]
