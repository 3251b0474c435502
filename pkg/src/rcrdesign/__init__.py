"""Optimal group allocation for two-treatment-group random coefficient
regression models."""

from .criteria import (
    CriterionKind,
    OptimizationResult,
    SweepConfig,
    criterion,
    eff_A,
    eff_D,
    efficiency,
    minimize_criterion,
    phi_A,
    phi_D,
    phi_est,
    round_to_exact,
    sweep,
    w_star_D_closed,
    w_star_est,
)
from .estimators import AllocationDesigner, TwoGroupBLUP
from .exceptions import (
    BoundaryError,
    ClosedFormUnavailableError,
    DegenerateDesignError,
    DegenerateDeterminantError,
    OracleError,
    RCRError,
)
from .model import (
    ApproxDesign,
    ExactDesign,
    ModelParams,
    MseMatrix,
    ObservationSet,
    blue_alpha0,
    blup_alpha,
    blup_alpha_i,
    blup_mu_components,
    mse_matrix_alpha,
    read_observations_csv,
    var_blue_alpha0,
    write_observations_csv,
)
from .simulation import SimulationSpec, ValidationReport, simulate_dataset, validate

__version__ = "0.1.0"
