from .builder import (
    FLOW_BOX,
    InfeasibleBigM,
    ProgramBuilder,
    UnknownPair,
    apply_refinement,
    build_droop_design,
    build_maropf,
    build_ropf,
    droop_parameters,
    line_flow_caps,
    objective_breakdown,
)
from .conic import (
    Affine,
    ConicProgram,
    ObjectiveWeights,
    VariableMap,
    check_program,
    dump_program,
    row_residuals,
)
