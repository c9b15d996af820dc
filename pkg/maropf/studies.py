"""
Experiments run on top of the design pipeline: how loose the current bound
is once it binds, and side-by-side rows for the two program modes.
"""
import warnings

import numpy as np
import pandas as pd

from maropf.grid.network import ScenarioHorizon
from maropf.grid.topology import build_topology
from maropf.powerflow.sweep import distflow_sweep
from maropf.program.builder import build_maropf
from maropf.program.conic import ObjectiveWeights
from maropf.solver.base import SolverConfig
from maropf.solver.branch_bound import solve_misocp
from maropf.utils import MaropfError, tqdm

BINDING_TOL = 1e-5
COLUMNS = ("mode", "F_obj", "F_pc", "F_pl", "F_v", "v_max", "v_min", "current_ratio", "violations", "secure")


class NoBindingLine(MaropfError, RuntimeError):
    pass


class ConservatismGap:
    def __init__(self, scale, line, f_bar, f_star, i_max, max_voltage):
        self.scale = scale
        self.line = line
        self.f_bar = f_bar
        self.f_star = f_star
        self.i_max = i_max
        self.max_voltage = max_voltage

    @property
    def gap(self):
        return (self.f_bar - self.f_star) / self.f_star

    def to_dict(self):
        return {
            "scale": float(self.scale),
            "line": int(self.line),
            "f_bar": float(self.f_bar),
            "f_star": float(self.f_star),
            "i_max": float(self.i_max),
            "gap": float(self.gap),
            "max_voltage": float(self.max_voltage),
        }


def injections_from_solution(solution, network, horizon, t):
    """Net consumption (p, q) per bus with the unit outputs of a solved step."""
    p_load, q_load = horizon.loads(network, t)
    p, q = p_load.copy(), q_load.copy()
    p_ava = horizon.p_ava(t)
    for j, ibdg in enumerate(network.ibdgs):
        if not ibdg.dispatchable:
            p[ibdg.bus - 1] -= max(p_ava[j], 0.0)
        elif ("pg", ibdg.bus, t) in solution.program.vmap:
            p[ibdg.bus - 1] -= solution.value("pg", ibdg.bus, t)
            q[ibdg.bus - 1] -= solution.value("qg", ibdg.bus, t)
    return p, q


def conservatism_gap(
    network,
    topo=None,
    horizon=None,
    t=0,
    relaxed_v_max=1.2,
    scales=None,
    weights=(0.9, 0.1, 0.0),
    config=None,
    verbose=False,
):
    """
    Relaxes the upper voltage limits, scales generation until the current
    bound f_up reaches the ampacity on some line, and compares it with the
    squared current of the power flow driven by the same injections.
    """
    topo = topo if topo is not None else build_topology(network)
    horizon = horizon if horizon is not None else ScenarioHorizon.flat(network)
    horizon = horizon.snapshot(t)
    scales = scales if scales is not None else np.geomspace(1.0, 16.0, 13)
    config = config if config is not None else SolverConfig()

    relaxed = network.scaled()
    for bus in relaxed.buses:
        bus.v_max = max(bus.v_max, relaxed_v_max ** 2)

    for scale in tqdm(scales, desc="Scaling generation", disable=not verbose):
        scaled = relaxed.scaled(generation=scale)
        scaled_horizon = horizon.scaled(scale)
        program = build_maropf(scaled, topo, scaled_horizon, 0, ObjectiveWeights(*weights))
        solution = solve_misocp(program, config)
        if not solution.usable:
            warnings.warn(f"Scale {scale:.3f} returned {solution.status}", stacklevel=2)
            continue
        f_up = solution.vector("f_up", 0)
        ratio = f_up / scaled.i_max
        i = int(np.argmax(ratio))
        if ratio[i] < 1.0 - BINDING_TOL:
            continue
        p, q = injections_from_solution(solution, scaled, scaled_horizon, 0)
        state = distflow_sweep(scaled, topo, p, q, scaled.shunt_g, scaled.shunt_b)
        result = ConservatismGap(
            scale, i + 1, f_up[i], state.f[i], scaled.i_max[i], float(np.sqrt(state.v.max()))
        )
        if verbose:
            print(f"Line {i + 1} binds at scale {scale:.3f}: gap {100 * result.gap:.4f} %")
        return result
    raise NoBindingLine(f"No current bound reached the ampacity up to scale {max(scales)}")


def comparison_row(mode, report):
    """Summary row of an optimize run's RunReport."""
    security = report.security
    obj = report.objective or {}
    return {
        "mode": mode,
        "F_obj": obj.get("F_obj"),
        "F_pc": obj.get("F_pc"),
        "F_pl": obj.get("F_pl"),
        "F_v": obj.get("F_v"),
        "v_max": None if security is None else security.worst_v_hi,
        "v_min": None if security is None else security.worst_v_lo,
        "current_ratio": None if security is None else security.worst_current_ratio,
        "violations": 0 if security is None else len(security.violations),
        "secure": report.ok,
    }


def comparison_frame(rows):
    return pd.DataFrame(rows, columns=COLUMNS)
