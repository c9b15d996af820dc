from .reference import brute_force_small, build_ybus, newton_powerflow
from .state import (
    Diverged,
    NonPositiveVoltage,
    NoRealSolution,
    NotConverged,
    PowerFlowError,
    PowerFlowState,
    SecurityVerdict,
    UnconvergedState,
    equation_residuals,
)
from .sweep import (
    adhoc_iteration,
    distflow_sweep,
    exact_droop_powerflow,
    ibdg_injections,
    simulate_horizon,
    verify_security,
)
