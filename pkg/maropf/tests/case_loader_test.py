import json
import os
import tempfile

import numpy as np
import pandas as pd

from maropf.grid.constants import BUNDLED_PROFILES
from maropf.preprocessing import (
    LengthMismatch,
    ParseError,
    SchemaVersionUnsupported,
    UnknownId,
    load_case,
    load_profiles,
    parse_window,
)

TINY_CASE = {
    "schema_version": 1,
    "name": "tiny",
    "bases": {"kv": 12.66, "mva": 1.0},
    "buses": [{"id": 0}, {"id": 1, "p_kw": 100, "q_kvar": 50}],
    "lines": [{"from": 0, "to": 1, "r_ohm": 0.1, "x_ohm": 0.2, "ampacity_a": 300}],
}


def _write(tmp, name, content):
    path = os.path.join(tmp, name)
    with open(path, "w") as f:
        f.write(content if isinstance(content, str) else json.dumps(content))
    return path


def test_bundled_cases():
    ieee34 = load_case("ieee34")
    assert (ieee34.n_bus, ieee34.n_line, len(ieee34.ibdgs)) == (34, 33, 11)
    assert len(ieee34.droop_ibdgs) == 8
    ieee85 = load_case("ieee85")
    assert (ieee85.n_bus, ieee85.n_line, len(ieee85.ibdgs)) == (85, 84, 11)
    assert np.isclose(ieee34.v_max[0], 1.05 ** 2)


def test_case_errors():
    with tempfile.TemporaryDirectory() as tmp:
        network = load_case(_write(tmp, "tiny.json", TINY_CASE))
        assert network.name == "tiny" and network.n_line == 1

        broken = json.loads(json.dumps(TINY_CASE))
        del broken["lines"][0]["r_ohm"]
        try:
            load_case(_write(tmp, "missing.json", broken))
            assert False, "missing field accepted"
        except ParseError as err:
            assert "lines[0].r_ohm" in str(err)

        broken = json.loads(json.dumps(TINY_CASE))
        broken["buses"][1]["p_kw"] = "lots"
        try:
            load_case(_write(tmp, "typed.json", broken))
            assert False, "string load accepted"
        except ParseError as err:
            assert "buses[1].p_kw" in str(err)

        try:
            load_case(_write(tmp, "bad.json", '{"buses": [\n  {"id": 0},\n'))
            assert False, "truncated JSON accepted"
        except ParseError as err:
            assert "bad.json:" in str(err)

        newer = dict(TINY_CASE, schema_version=2)
        try:
            load_case(_write(tmp, "newer.json", newer))
            assert False, "unknown schema accepted"
        except SchemaVersionUnsupported:
            pass

        try:
            load_case(os.path.join(tmp, "nowhere.json"))
            assert False, "missing file accepted"
        except FileNotFoundError:
            pass


def test_profile_windows():
    network = load_case("ieee34")
    assert parse_window("scenario1") == (7 * 60, 12 * 60)

    morning = load_profiles("ieee34", network, "scenario1")
    assert morning.T == 20
    assert morning.timesteps[0] == "07:00" and morning.timesteps[-1] == "11:45"
    assert morning.availability.shape == (20, 11)
    assert morning.load_multipliers.shape == (20, 33)

    assert load_profiles("ieee34", network, "scenario2").T == 36
    assert load_profiles("ieee34", network).T == 96
    assert load_profiles("ieee34", network, "scenario1", step_minutes=30).T == 10

    df = pd.read_csv(BUNDLED_PROFILES["ieee34"], dtype={"time": str})
    row = df[df["time"] == "07:00"].iloc[0]
    p_max = np.array([ibdg.p_max for ibdg in network.ibdgs])
    fractions = np.array([row[ibdg.id] for ibdg in network.ibdgs], dtype=float)
    assert np.allclose(morning.availability[0], fractions * p_max)

    try:
        parse_window("12:00-07:00")
        assert False, "reversed window accepted"
    except ValueError:
        pass


def test_profile_errors():
    network = load_case("ieee34")
    df = pd.read_csv(BUNDLED_PROFILES["ieee34"], dtype={"time": str})
    with tempfile.TemporaryDirectory() as tmp:
        extra = os.path.join(tmp, "extra.csv")
        df.assign(pv99=0.5).to_csv(extra, index=False)
        try:
            load_profiles(extra, network)
            assert False, "unknown column accepted"
        except UnknownId as err:
            assert "pv99" in str(err)

        missing = os.path.join(tmp, "missing.csv")
        df.drop(columns=["pv18"]).to_csv(missing, index=False)
        try:
            load_profiles(missing, network)
            assert False, "missing column accepted"
        except UnknownId:
            pass

        short = os.path.join(tmp, "short.csv")
        df[df["time"] != "08:00"].to_csv(short, index=False)
        try:
            load_profiles(short, network, "scenario1")
            assert False, "gap in the window accepted"
        except LengthMismatch:
            pass
