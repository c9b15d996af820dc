from .network import Bus, IbdgSpec, Line, RadialNetwork, ScenarioHorizon
from .per_unit import NonPositiveBase, to_per_unit, to_physical
from .topology import (
    CycleDetected,
    DisconnectedBus,
    GridError,
    TopologyMatrices,
    build_topology,
    check_closure,
    downstream_load,
    raise_diagnostics,
    validate_radial,
)
