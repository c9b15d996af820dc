import os
import tempfile

import numpy as np
import scipy.sparse

from maropf.conditions import DroopSlopes, tune_droop_slopes
from maropf.grid import build_topology
from maropf.powerflow import distflow_sweep
from maropf.preprocessing.case_loader import load_case, load_profiles
from maropf.program import (
    Affine,
    ConicProgram,
    ObjectiveWeights,
    build_droop_design,
    build_ropf,
    objective_breakdown,
)
from maropf.solver import (
    SolverConfig,
    Status,
    presolve,
    independent_rows,
    solve_by_enumeration,
    solve_misocp,
    solve_socp,
    tighten_binaries,
)
from maropf.tests.cases import five_bus_chain, flat_horizon, two_bus


def test_small_conic_programs():
    linear = ConicProgram("linear")
    x = linear.add_variable("x", 1, 0)
    linear.add_row({x: 1.0}, ">=", 1.0)
    linear.objective = Affine({x: 1.0})
    sol = solve_socp(linear)
    assert sol.status == Status.OPTIMAL
    assert abs(sol.objective - 1.0) <= 1e-6

    conic = ConicProgram("cone")
    t = conic.add_variable("t", 1, 0, lb=0.0)
    u = conic.add_variable("u", 1, 0)
    conic.add_row({u: 1.0}, "==", 2.0)
    conic.add_cone([Affine({u: 1.0})], Affine({t: 1.0}), Affine(constant=1.0))
    conic.objective = Affine({t: 1.0})
    sol = solve_socp(conic)
    assert abs(sol.value("t", 1, 0) - 4.0) <= 1e-5


def test_binary_presolve():
    program = ConicProgram("activation")
    y = program.add_variable("y", 1, 0, 0.0, 1.0, binary=True)
    v = program.add_variable("v", 1, 0, 1.0, 1.1)
    v0p = program.add_variable("v0p", 1, None, 0.9, 0.95)
    program.activations.append((y, v, v0p, 1.0))
    lb, ub = program.bounds()
    assert tighten_binaries(program, lb, ub) == 1
    assert lb[y] == ub[y] == 1.0

    lb, ub = program.bounds()
    try:
        presolve(program, lb, ub, {"tighten_binaries": False})
        assert False, "free binary accepted"
    except ValueError:
        pass


def test_ropf_matches_power_flow():
    network = two_bus(load=(0.5, 0.2))
    topo = build_topology(network)
    program = build_ropf(network, topo, flat_horizon(network, steps=1), weights=ObjectiveWeights(0.0, 1.0, 0.0))
    sol = solve_socp(program)
    state = distflow_sweep(network, topo, network.load_p, network.load_q, network.shunt_g, network.shunt_b)
    assert abs(sol.value("v", 1, 0) - state.v_lines[0]) <= 1e-5
    assert abs(sol.value("f", 1, 0) - state.f[0]) <= 1e-4
    breakdown = objective_breakdown(program, sol.x)
    assert np.isclose(breakdown["F_obj"], sol.objective)
    assert np.isclose(breakdown["F_pl"], network.r[0] * sol.value("f", 1, 0))


def test_branch_and_bound_matches_enumeration():
    network = five_bus_chain()
    topo = build_topology(network)
    slopes = DroopSlopes(["pv2", "pv4"], [0.5, 0.5], [0.5, 0.5])
    program = build_droop_design(
        network, topo, flat_horizon(network, steps=2), slopes, mode="ropf"
    )
    assert len(program.binaries) == 4
    config = SolverConfig()
    bb = solve_misocp(program, config)
    enum = solve_by_enumeration(program, config)
    assert bb.status == Status.OPTIMAL and enum.status == Status.OPTIMAL
    assert abs(bb.objective - enum.objective) <= 1e-5 * max(1.0, abs(enum.objective))
    assert all(bb.x[y] in (0.0, 1.0) for y in program.binaries)

    cold = solve_misocp(program, SolverConfig(warm_start=False))
    assert abs(cold.objective - bb.objective) <= 1e-5 * max(1.0, abs(bb.objective))

    history = bb.stats["bound_history"]
    assert all(b - a >= -1e-7 * max(1.0, abs(bb.objective)) for a, b in zip(history, history[1:]))
    assert bb.stats["best_bound"] <= bb.objective + 1e-9


def test_solver_log():
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "solver.log")
        network = two_bus()
        topo = build_topology(network)
        program = build_ropf(network, topo, flat_horizon(network, steps=1))
        solve_misocp(program, SolverConfig(log_path=path))
        with open(path) as f:
            records = f.read().splitlines()
        assert records and all(line.startswith("ipm ") for line in records)
        assert "status=optimal" in records[-1]


def test_relaxation_never_exceeds_availability():
    network = load_case("ieee34")
    topo = build_topology(network)
    horizon = load_profiles("ieee34", network, "12:00-13:00").snapshot(0)
    slopes = tune_droop_slopes(network, topo, 0.0)
    program = build_droop_design(network, topo, horizon, slopes)
    for key in program.vmap.of_kind("pg"):
        assert program.ub[program.vmap[key]] <= max(horizon.p_ava(0)) + 1e-12

    sol = solve_socp(program, relax=True)
    assert sol.status == Status.OPTIMAL
    # curtailment, losses and deviation are all non-negative
    assert sol.objective >= -1e-6
    for j, ibdg in enumerate(network.ibdgs):
        if ibdg.dispatchable:
            assert sol.value("pg", ibdg.bus, 0) <= horizon.p_ava(0)[j] + 1e-7
            assert sol.value("pg_hat", ibdg.bus, 0) <= horizon.p_ava(0)[j] + 1e-7


def test_dependent_rows_are_remembered():
    rows_A = scipy.sparse.csc_matrix(np.array([[1.0, 1.0], [2.0, 2.0], [1.0, -1.0]]))
    A, b, kept = independent_rows(rows_A, np.array([1.0, 2.0, 0.0]))
    assert A.shape == (2, 2) and len(kept) == 2 and 2 in kept

    program = ConicProgram("dependent")
    x = program.add_variable("x", 1, 0, 0.0, 2.0)
    y = program.add_variable("y", 1, 0, 0.0, 2.0)
    program.add_row({x: 1.0, y: 1.0}, "==", 1.0)
    program.add_row({x: 2.0, y: 2.0}, "==", 2.0)
    program.add_row({x: 1.0, y: -1.0}, "<=", 0.0)
    program.objective = Affine({x: -1.0})
    program.dependent_rows = {1}
    sol = solve_socp(program)
    assert sol.status == Status.OPTIMAL
    assert sol.stats["dependent_rows"] == 1
    assert abs(sol.value("x", 1, 0) - 0.5) <= 1e-6

    # a remembered row that disagrees with the kept one is not dropped silently
    program.rows[1].rhs = 3.0
    assert solve_socp(program).status == Status.INFEASIBLE
