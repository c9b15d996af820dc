import copy
import os
import tempfile

from maropf.designer import DroopDesigner, resolve_config
from maropf.report import load_report
from maropf.tests.cases import five_bus_chain, three_bus_chain, write_case

SLOPES = {
    "pv2": {"alpha_p": 0.5, "alpha_q": 0.5},
    "pv4": {"alpha_p": 0.5, "alpha_q": 0.5},
}

config = {
    "case": {"name": None, "window": None},
    "design": {"slopes": SLOPES, "weights": "0.6,0.3,0.1"},
    "cmd": {"debug": False, "identifier": "test", "verbose": False},
}


def _config(case_path, run_dir, identifier="test", **design):
    config_1 = copy.deepcopy(config)
    config_1["case"]["name"] = case_path
    config_1["cmd"]["run_dir"] = run_dir
    config_1["cmd"]["identifier"] = identifier
    config_1["design"].update(design)
    return config_1


def test_resolve_config():
    resolved = resolve_config({"design": {"mode": "ropf"}})
    assert resolved["design"]["mode"] == "ropf"
    assert resolved["design"]["weights"] == [0.6, 0.3, 0.1]
    assert resolved["case"]["window"] == "scenario1"


def test_check_writes_report():
    with tempfile.TemporaryDirectory() as tmp:
        case_path = write_case(three_bus_chain(), tmp)
        designer = DroopDesigner(_config(case_path, tmp))
        report = designer.check()
        assert report.conditions["overall"]
        assert os.path.isfile(os.path.join(designer.out_dir, "report.json"))
        assert designer.out_dir.endswith("-test")


def test_optimize_then_simulate():
    with tempfile.TemporaryDirectory() as tmp:
        case_path = write_case(five_bus_chain(), tmp)
        designer = DroopDesigner(_config(case_path, tmp, "opt"))
        report = designer.optimize()
        assert report.solver["status"] == "Optimal"
        assert report.breakdown_error() <= 1e-9
        assert sorted(report.droop) == ["pv2", "pv4"]
        for entry in report.droop.values():
            assert 0.81 - 1e-6 <= entry["approx"]["v0p"] <= 1.1025 + 1e-6
        for name in ("report.json", "series.csv", "droop.json"):
            assert os.path.isfile(os.path.join(designer.out_dir, name))
        assert load_report(os.path.join(designer.out_dir, "report.json")) == report

        replay = DroopDesigner(_config(case_path, tmp, "sim"))
        replayed = replay.simulate(os.path.join(designer.out_dir, "droop.json"))
        assert replayed.verdicts == report.verdicts
        assert replayed.ok == report.ok


def test_debug_writes_nothing():
    with tempfile.TemporaryDirectory() as tmp:
        case_path = write_case(three_bus_chain(), tmp)
        config_1 = _config(case_path, tmp)
        config_1["cmd"]["debug"] = True
        designer = DroopDesigner(config_1)
        designer.check()
        assert designer.out_dir is None
        assert not os.path.exists(os.path.join(tmp, "results"))


def test_compare_modes():
    with tempfile.TemporaryDirectory() as tmp:
        case_path = write_case(five_bus_chain(), tmp)
        designer = DroopDesigner(_config(case_path, tmp, "cmp"))
        report = designer.compare()
        assert [row["mode"] for row in report.comparison] == ["ropf", "maropf"]
        assert os.path.isfile(os.path.join(designer.out_dir, "comparison.csv"))
        for mode in ("ropf", "maropf"):
            assert os.path.isfile(os.path.join(designer.out_dir, mode, "droop.json"))
