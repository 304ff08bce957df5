"""Distributionally robust degree optimization for BATS codes."""

__version__ = "0.1.0"

from .calibration import (
    AmbiguitySpec,
    gaussian_limit_cov,
    tv_distance,
    tv_radius,
    wasserstein_distance,
    wasserstein_radius,
)
from .channel import NetworkSpec, build_kernel, capacity, exact_hop_distribution, sample_empirical
from .core import (
    CodeParams,
    DegreeDistribution,
    RankDistribution,
    build_decodability_matrix,
    build_mho,
    decodability_lhs,
    evaluate_rate,
    regularized_incomplete_beta,
    zeta,
)
from .lp import LinearProgram, LpSolution, LpStatus, solve
from .optimizers import (
    OptimizationResult,
    direct_lp,
    mu_universal,
    safety_margin,
    tv_dro,
    wasserstein_dro,
)
