import os
import tempfile

import numpy as np

from maropf.conditions import (
    ConditionCache,
    DroopSlopes,
    check_conditions,
    compute_condition_matrices,
    effective_shunts,
    find_condition_break,
    flow_envelope,
    lossless_voltage,
    neumann_inverse,
    sweep_epsilon,
    tune_droop_slopes,
)
from maropf.grid import build_topology
from maropf.powerflow import adhoc_iteration, distflow_sweep
from maropf.preprocessing import load_case
from maropf.tests.cases import five_bus_chain, pv, three_bus_chain


def test_inverse_and_signs():
    network = five_bus_chain()
    topo = build_topology(network)
    slopes = DroopSlopes(["pv2", "pv4"], [0.5, 0.5], [0.5, 0.5])
    matrices = compute_condition_matrices(network, topo, effective_shunts(network, slopes))
    assert np.allclose(matrices.C @ matrices.K, np.eye(4), atol=1e-10)
    assert np.allclose(matrices.theta, matrices.pi ** 2 + matrices.rho ** 2)

    # no shunts: C = H^T and D is entrywise positive on a chain
    bare = compute_condition_matrices(network, topo, (np.zeros(4), np.zeros(4)))
    assert np.allclose(bare.C, topo.H.T)
    assert bare.D.min() > 0


def test_conditions_hold_without_droop():
    network = three_bus_chain()
    topo = build_topology(network)
    matrices = compute_condition_matrices(
        network, topo, effective_shunts(network), flow_envelope(network, topo)
    )
    report = check_conditions(matrices)
    assert report.overall, report.to_dict()
    assert report.norm_8a == 0.0
    assert report.eta is not None and report.eta < 0.5


def test_lossless_identity_at_power_flow():
    shunts = [(0.0, 0.0), (0.02, 0.01), (0.01, -0.02), (0.0, 0.0), (0.03, 0.01)]
    network = five_bus_chain(shunts=shunts)
    topo = build_topology(network)
    g, b = network.shunt_g, network.shunt_b
    p = network.load_p - network.incidence() @ np.array([0.2, 0.05, 0.1])
    q = network.load_q
    state = distflow_sweep(network, topo, p, q, g, b)
    matrices = compute_condition_matrices(network, topo, (g, b))
    v_hat = lossless_voltage(matrices, network, topo, p, q)
    residual = state.v_lines - (v_hat - matrices.D @ state.f)
    assert np.max(np.abs(residual)) / np.max(np.abs(state.v_lines)) <= 1e-6

    again = adhoc_iteration(v_hat, matrices.D, p, q, g, b, topo, state)
    assert np.allclose(again.v, state.v, atol=1e-9)
    assert np.allclose(again.f, state.f, atol=1e-9)


def test_slope_tuning_and_sweep():
    network = load_case("ieee34")
    topo = build_topology(network)
    slopes = tune_droop_slopes(network, topo, 0.0)
    assert len(slopes.ids) == 8
    assert np.all(slopes.alpha_p > 0) and np.all(slopes.alpha_q > 0)
    wider = tune_droop_slopes(network, topo, 0.5)
    assert np.all(wider.alpha_p < slopes.alpha_p)

    frame = sweep_epsilon(network, np.linspace(0.0, 1.0, 20), topo)
    assert len(frame) == 20
    assert np.all(frame["det_sign"] != 0)
    assert frame["det_sign"].nunique() == 1
    assert np.all(frame["min_D"] >= -1e-12)

    restored = DroopSlopes.from_dict(network, slopes.to_dict())
    assert np.allclose(restored.alpha_q, slopes.alpha_q)


def test_neumann_series():
    A = np.array([[0.1, 0.2], [0.0, 0.3]])
    approx, n_terms = neumann_inverse(A, tol=1e-10)
    assert n_terms > 0
    assert np.allclose(approx, np.linalg.inv(np.eye(2) - A), atol=1e-9)


def test_matrix_cache():
    network = three_bus_chain()
    topo = build_topology(network)
    shunts = effective_shunts(network)
    with tempfile.TemporaryDirectory() as tmp:
        cache = ConditionCache(os.path.join(tmp, "conditions"))
        first = compute_condition_matrices(network, topo, shunts, cache=cache)
        assert len(os.listdir(cache.db_dir)) == 1
        second = compute_condition_matrices(network, topo, shunts, cache=cache)
        assert np.allclose(first.D, second.D)
        assert second.det_sign == first.det_sign


def test_condition_break_under_growing_injection():
    network = three_bus_chain(ibdgs=[pv("pv2", 2)])
    brk = find_condition_break(network)
    assert brk.scale > 0
    assert brk.violated
    assert brk.to_dict()["report"]["overall"] is False

    feeder = load_case("ieee34")
    topo = build_topology(feeder)
    slopes = tune_droop_slopes(feeder, topo, 0.0)
    brk = find_condition_break(feeder, topo=topo, slopes=slopes)
    # the eta bound goes first, at a point the feeder already overvoltages
    assert brk.violated == ["8d"]
    assert brk.max_voltage > 1.05
    assert brk.max_voltage_droop is not None
    assert brk.max_voltage_droop < brk.max_voltage
