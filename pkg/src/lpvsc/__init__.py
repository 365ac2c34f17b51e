"""Numerical verification of variational source conditions for L^p Tikhonov
regularization, with the dyadic frequency analysis and the elliptic
coefficient problem that motivate them.

The package splits into discrete function spaces (:mod:`lpvsc.grids`,
:mod:`lpvsc.lebesgue`), the dyadic frequency decomposition with its measured
constants (:mod:`lpvsc.dyadic`), index functions and source-condition checks
(:mod:`lpvsc.vsc`), the Neumann elliptic solver with measure data
(:mod:`lpvsc.elliptic`), Tikhonov solvers and rate experiments
(:mod:`lpvsc.tikhonov`), and an experiment harness with a command-line front
end (:mod:`lpvsc.harness`, :mod:`lpvsc.cli`).
"""

from .grids import Grid, GridFunction, load_gridfunction, save_gridfunction
from .lebesgue import (
    Exponents,
    convexity_gap,
    duality_map,
    duality_product,
    estimate_cp,
    lp_norm,
    phi_p_apply,
    phi_p_holder_estimate,
)
from .dyadic import (
    LPDecomposition,
    SquareFunctionParams,
    build_dyadic_fourier,
    build_orthobasis,
    calibrate_decomposition,
    high_pass,
    low_pass,
    project,
    rbound_estimate,
    reconstruct,
    tl_dual_norm,
    tl_norm,
)
from .vsc import (
    HolderIndex,
    IndexFunction,
    SourceNorms,
    alpha_choice,
    calibrate_C,
    check_stability,
    check_vsc,
    make_psi,
    psi_decay_ratio,
)
from .elliptic import (
    DiffusionField,
    EllipticProblem,
    FeasibleSet,
    MeasureData,
    ObservationNorm,
    adjoint_gradient,
    assemble,
    dual_h1q_norm,
    linearized_solve,
    piecewise_constant,
    project_feasible,
    sobolev_norm,
    solve,
)
from .tikhonov import (
    DiagonalModel,
    RateReport,
    TikhonovConfig,
    add_noise,
    diagonal_solve,
    fit_rate,
    rate_experiment,
    solve_nonlinear,
)

__version__ = "0.1.0"

__all__ = [
    "Grid", "GridFunction", "load_gridfunction", "save_gridfunction",
    "Exponents", "lp_norm", "duality_product", "duality_map", "phi_p_apply",
    "convexity_gap", "estimate_cp", "phi_p_holder_estimate",
    "LPDecomposition", "SquareFunctionParams", "build_dyadic_fourier",
    "build_orthobasis", "project", "reconstruct", "tl_norm", "tl_dual_norm",
    "low_pass", "high_pass", "rbound_estimate", "calibrate_decomposition",
    "HolderIndex", "IndexFunction", "SourceNorms", "make_psi",
    "psi_decay_ratio", "alpha_choice", "check_stability", "check_vsc",
    "calibrate_C",
    "DiffusionField", "MeasureData", "FeasibleSet", "EllipticProblem",
    "ObservationNorm", "assemble", "solve", "sobolev_norm", "dual_h1q_norm",
    "project_feasible", "linearized_solve", "adjoint_gradient",
    "piecewise_constant",
    "TikhonovConfig", "RateReport", "DiagonalModel", "diagonal_solve",
    "solve_nonlinear", "add_noise", "rate_experiment", "fit_rate",
    "__version__",
]
