from .base import (
    IterLimit,
    NumericalBreakdown,
    Solution,
    SolverConfig,
    SolverError,
    SolverLog,
    Status,
)
from .branch_bound import solve_by_enumeration, solve_misocp
from .presolve import presolve, tighten_binaries
from .socp import independent_rows, solve_socp
