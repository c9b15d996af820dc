import numpy as np

from maropf.report import RunReport
from maropf.studies import COLUMNS, comparison_frame, comparison_row, conservatism_gap
from maropf.tests.cases import pv, two_bus


def test_current_bound_gap_is_small():
    network = two_bus(load=(0.1, 0.05), ibdgs=[pv("pv1", 1)])
    result = conservatism_gap(network)
    assert result.line == 1
    assert result.f_bar >= result.i_max * (1.0 - 1e-5)
    assert -1e-6 <= result.gap < 0.1
    assert set(result.to_dict()) >= {"scale", "gap", "f_bar", "f_star"}


def test_comparison_rows():
    verdict = {"worst_v_hi": 1.03, "worst_v_lo": 0.96, "worst_current_ratio": 0.4, "violations": []}
    objective = {"F_obj": 0.1, "F_pc": 0.1, "F_pl": 0.05, "F_v": 0.02, "weights": [0.6, 0.3, 0.1]}
    rows = [
        comparison_row(mode, RunReport("optimize", objective=objective, verdicts=[verdict]))
        for mode in ("ropf", "maropf")
    ]
    frame = comparison_frame(rows)
    assert tuple(frame.columns) == COLUMNS
    assert list(frame["mode"]) == ["ropf", "maropf"]
    assert frame["secure"].all()
    assert np.isclose(frame["v_max"][0], 1.03)
