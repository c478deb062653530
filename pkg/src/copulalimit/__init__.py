"""Random discrete copulas, exact blocking probabilities and their bridged Brownian sheet limit."""
from .blocking import (
    Blocking,
    GridBlocking,
    GridSpec,
    blocking_prob_exact,
    expected_count,
    factorial_free_approx,
    grid_blocking_prob_exact,
    log_prob,
    rect_prob,
    sparsity,
    stirling_log_factorial,
)
from .copula import (
    BirkhoffCopula,
    DiscreteCopula,
    Permutation,
    birkhoff_copula_from_matrix,
    copula_from_permutation,
    is_discrete_copula,
    permutation_from_copula,
    product_copula,
    residual,
)
from .gaussian import (
    GammaGrid,
    NormalizedBlocking,
    RegularityParams,
    build_gamma_grid,
    gaussian_approx_ratio,
    gaussian_density,
    is_alpha_regular,
    is_standard,
    log_prob_gamma_grid,
    nearest_lattice_point,
    tail_bound,
)
from .samplers import McmcConfig, metropolis_move, sample_birkhoff_uniform, sample_permutation_uniform
from .sheet import (
    SheetSample,
    bridge_from_sheet,
    holder_check_function,
    project_to_Vg,
    sample_sheet_grid,
    sheet_covariance_oracle,
)

__version__ = "0.1.0"

__all__ = [
    "BirkhoffCopula",
    "Blocking",
    "DiscreteCopula",
    "GammaGrid",
    "GridBlocking",
    "GridSpec",
    "McmcConfig",
    "NormalizedBlocking",
    "Permutation",
    "RegularityParams",
    "SheetSample",
    "birkhoff_copula_from_matrix",
    "blocking_prob_exact",
    "bridge_from_sheet",
    "build_gamma_grid",
    "copula_from_permutation",
    "expected_count",
    "factorial_free_approx",
    "gaussian_approx_ratio",
    "gaussian_density",
    "grid_blocking_prob_exact",
    "holder_check_function",
    "is_alpha_regular",
    "is_discrete_copula",
    "is_standard",
    "log_prob",
    "log_prob_gamma_grid",
    "metropolis_move",
    "nearest_lattice_point",
    "permutation_from_copula",
    "product_copula",
    "project_to_Vg",
    "rect_prob",
    "residual",
    "sample_birkhoff_uniform",
    "sample_permutation_uniform",
    "sample_sheet_grid",
    "sheet_covariance_oracle",
    "sparsity",
    "stirling_log_factorial",
    "tail_bound",
]
