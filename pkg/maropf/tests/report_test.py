import os
import tempfile

import numpy as np

from maropf.droop import DroopParameters, approx_to_exact
from maropf.grid import build_topology
from maropf.powerflow import PowerFlowState, exact_droop_powerflow
from maropf.preprocessing import SchemaVersionUnsupported
from maropf.report import (
    RunReport,
    load_droop_parameters,
    load_report,
    render_report,
    save_droop_parameters,
    save_report,
    series_frame,
)
from maropf.tests.cases import five_bus_chain


def _report():
    verdicts = [
        {"worst_v_hi": 1.04, "worst_v_lo": 0.97, "worst_current_ratio": 0.2, "violations": []},
        {"worst_v_hi": 1.06, "worst_v_lo": 0.98, "worst_current_ratio": 0.3, "violations": [["v_hi", 3, 1, 0.01]]},
    ]
    return RunReport(
        "optimize",
        scenario={"case": "toy", "window": "scenario1", "timesteps": ["07:00", "07:15"], "mode": "maropf"},
        objective={
            "F_obj": np.float64(0.6 * 0.5 + 0.3 * 0.2 + 0.1 * 0.1),
            "F_pc": 0.5,
            "F_pl": 0.2,
            "F_v": 0.1,
            "weights": (0.6, 0.3, 0.1),
        },
        verdicts=verdicts,
        solver={"status": "Optimal", "gap": float("inf"), "nodes": np.int64(3)},
    )


def test_report_round_trip():
    report = _report()
    assert report.solver["gap"] is None
    assert isinstance(report.solver["nodes"], int)
    assert report.breakdown_error() <= 1e-12
    assert not report.ok
    security = report.security
    assert np.isclose(security.worst_v_hi, 1.06) and np.isclose(security.worst_v_lo, 0.97)
    assert len(security.violations) == 1

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "report.json")
        save_report(report, path)
        again = load_report(path)
    assert again == report
    text = render_report(again)
    assert "violations 1" in text and "v_hi line 3 step 1" in text

    data = report.to_dict()
    data["schema_version"] = 99
    try:
        RunReport.from_dict(data)
        assert False, "future schema accepted"
    except SchemaVersionUnsupported:
        pass
    try:
        RunReport("check", colour="blue")
        assert False, "unknown field accepted"
    except ValueError:
        pass


def test_droop_file_and_series():
    network = five_bus_chain()
    topo = build_topology(network)
    params = {
        ibdg.id: DroopParameters(0.5, 0.5, 1.1025, 1.0, 0.01) for ibdg in network.droop_ibdgs
    }
    curves = {key: approx_to_exact(value, 1.1025) for key, value in params.items()}
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "droop.json")
        save_droop_parameters(path, network, params, curves)
        loaded_params, loaded_curves = load_droop_parameters(path)
    assert sorted(loaded_curves) == ["pv2", "pv4"]
    assert loaded_curves["pv2"].to_dict() == curves["pv2"].to_dict()
    assert loaded_params["pv4"].to_dict() == params["pv4"].to_dict()

    p_ava = 0.8 * np.array([ibdg.p_max for ibdg in network.ibdgs])
    state = exact_droop_powerflow(network, topo, curves, p_ava)
    flat = PowerFlowState(np.ones(5), np.zeros(4), np.zeros(4), np.zeros(4))
    frame = series_frame(["07:00", "07:15"], [state, flat])
    assert list(frame.columns) == ["time", "v_max_oracle", "v_min_oracle", "f_max_oracle"]
    assert np.isclose(frame["v_max_oracle"][0], np.sqrt(state.v.max()))
    assert frame["f_max_oracle"][1] == 0.0
