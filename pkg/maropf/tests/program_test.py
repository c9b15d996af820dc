import io

import numpy as np

from maropf.conditions import DroopSlopes
from maropf.grid import build_topology
from maropf.powerflow import distflow_sweep
from maropf.program import (
    InfeasibleBigM,
    ObjectiveWeights,
    UnknownPair,
    apply_refinement,
    build_droop_design,
    build_maropf,
    build_ropf,
    check_program,
    dump_program,
    line_flow_caps,
    row_residuals,
)
from maropf.tests.cases import five_bus_chain, flat_horizon, pv, three_bus_chain, two_bus


def test_program_sizes():
    network = two_bus()
    topo = build_topology(network)
    horizon = flat_horizon(network, steps=1)
    ropf = build_ropf(network, topo, horizon)
    assert (ropf.n_var, len(ropf.rows), len(ropf.cones)) == (5, 5, 1)
    maropf = build_maropf(network, topo, horizon)
    assert (maropf.n_var, len(maropf.rows), len(maropf.cones)) == (13, 14, 5)
    assert check_program(ropf) == [] and check_program(maropf) == []
    assert maropf.info["mode"] == "maropf" and not maropf.info["droop"]

    p_cap, q_cap = line_flow_caps(network, topo)
    assert np.isclose(p_cap[0], 0.55) and np.isclose(q_cap[0], 0.22)


def test_power_flow_point_is_feasible():
    network = three_bus_chain()
    topo = build_topology(network)
    program = build_ropf(network, topo, flat_horizon(network, steps=1))
    state = distflow_sweep(
        network, topo, network.load_p, network.load_q, network.shunt_g, network.shunt_b
    )
    x = np.zeros(program.n_var)
    vmap = program.vmap
    for l in (1, 2):
        i = l - 1
        x[vmap[("v", l, 0)]] = state.v_lines[i]
        x[vmap[("f", l, 0)]] = state.f[i]
        x[vmap[("P", l, 0)]] = state.P[i]
        x[vmap[("Q", l, 0)]] = state.Q[i]
        x[vmap[("v_dev", l, 0)]] = abs(state.v_lines[i] - 1.0)
    assert np.max(row_residuals(program, x)) <= 1e-9


def test_program_checks_and_dump():
    network = two_bus()
    topo = build_topology(network)
    program = build_ropf(network, topo, flat_horizon(network, steps=1))
    broken = program.copy()
    broken.add_row({999: 1.0}, "<=", 1.0, "stray")
    broken.rows.append(broken.rows[0])
    issues = check_program(broken)
    assert len(issues) == 2
    assert any("undeclared" in issue for issue in issues)
    assert any("duplicates" in issue for issue in issues)

    out = io.StringIO()
    dump_program(program, out)
    lines = out.getvalue().splitlines()
    assert lines[0].startswith("# maropf program")
    assert sum(line.startswith("var ") for line in lines) == program.n_var
    assert sum(line.startswith("row ") for line in lines) == len(program.rows)
    assert lines[-1].startswith("obj :")


def test_refinement_substitution():
    network = two_bus()
    topo = build_topology(network)
    program = build_maropf(network, topo, flat_horizon(network, steps=1))
    refined = apply_refinement(program, {(1, 0)}, set())
    kinds = [cone.meta[3] for cone in refined.cones if cone.meta[0] == "fbar"]
    assert sorted(kinds) == ["P_hat", "P_hat", "P_up", "P_up"]
    assert refined.info["refined"]["Wp"] == [(1, 0)]
    # the source program is left alone
    assert all(cone.meta[3] != "P_hat" for cone in program.cones if cone.meta[0] == "fbar")

    for bad_program, pairs in ((program, {(5, 0)}), (build_ropf(network, topo, flat_horizon(network)), {(1, 0)})):
        try:
            apply_refinement(bad_program, pairs, set())
            assert False, "unknown pair accepted"
        except UnknownPair:
            pass


def test_droop_design_validation():
    network = five_bus_chain()
    topo = build_topology(network)
    horizon = flat_horizon(network, steps=2)
    slopes = DroopSlopes(["pv2", "pv4"], [0.5, 0.5], [0.5, 0.5])
    program = build_droop_design(network, topo, horizon, slopes, ObjectiveWeights())
    assert len(program.binaries) == 4
    assert len(program.activations) == 4
    assert ("v0p", 2, None) in program.vmap and ("v0q", 4, None) in program.vmap
    assert check_program(program) == []

    try:
        build_droop_design(network, topo, horizon, slopes, big_m=0.01)
        assert False, "small big-M accepted"
    except InfeasibleBigM:
        pass

    crowded = five_bus_chain()
    crowded.ibdgs.append(pv("pv2b", 2))
    try:
        build_droop_design(crowded, topo, horizon, slopes)
        assert False, "two droop units on one bus accepted"
    except ValueError:
        pass
