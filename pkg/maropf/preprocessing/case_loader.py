import json
import os

import numpy as np
import pandas as pd

from maropf.grid.constants import BUNDLED_CASES, BUNDLED_PROFILES, SCHEMA_VERSION, WINDOW_PRESETS
from maropf.grid.network import ScenarioHorizon
from maropf.grid.per_unit import to_per_unit
from maropf.grid.topology import raise_diagnostics, validate_radial
from maropf.utils import MaropfError


class CaseIOError(MaropfError, ValueError):
    pass


class ParseError(CaseIOError):
    pass


class SchemaVersionUnsupported(CaseIOError):
    pass


class LengthMismatch(CaseIOError):
    pass


class UnknownId(CaseIOError):
    pass


REQUIRED = {
    "buses": ("id",),
    "lines": ("from", "to", "r_ohm", "x_ohm", "ampacity_a"),
    "ibdgs": ("id", "bus", "p_max_kw"),
}
NUMERIC = {
    "buses": ("id", "p_kw", "q_kvar", "g_kw", "b_kvar", "v_min", "v_max", "v_target", "v_threshold"),
    "lines": ("from", "to", "r_ohm", "x_ohm", "ampacity_a", "p_max_kw", "q_max_kvar"),
    "ibdgs": ("bus", "p_max_kw", "q_min_kvar", "q_max_kvar", "s_max_kva", "mu_min", "taylor_v"),
}


def resolve_case_path(path_or_name):
    if path_or_name in BUNDLED_CASES:
        return BUNDLED_CASES[path_or_name]
    return path_or_name


def _check_fields(raw, path):
    for section, required in REQUIRED.items():
        entries = raw.get(section, [] if section == "ibdgs" else None)
        if not isinstance(entries, list):
            raise ParseError(f"{path}: '{section}' must be a list")
        for k, entry in enumerate(entries):
            for key in required:
                if key not in entry:
                    raise ParseError(f"{path}: {section}[{k}].{key} is missing")
            for key in NUMERIC[section]:
                value = entry.get(key)
                if value is None:
                    continue
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise ParseError(f"{path}: {section}[{k}].{key}: expected a number, got {value!r}")


def load_case(path_or_name):
    """
    Reads a JSON case (bundled name or file path) into a validated
    per-unit RadialNetwork.
    """
    path = resolve_case_path(path_or_name)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"No case named or stored at '{path_or_name}'")
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as err:
            raise ParseError(f"{path}:{err.lineno}:{err.colno}: {err.msg}")

    version = raw.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise SchemaVersionUnsupported(
            f"{path}: schema version {version}, this release reads {SCHEMA_VERSION}"
        )
    _check_fields(raw, path)
    network = to_per_unit(raw)
    if not network.name:
        network.name = os.path.splitext(os.path.basename(path))[0]

    diagnostics = validate_radial(network)
    if diagnostics:
        raise_diagnostics(diagnostics)
    return network


def _minutes(label):
    try:
        hours, minutes = label.strip().split(":")
        value = int(hours) * 60 + int(minutes)
    except (AttributeError, ValueError):
        raise ParseError(f"Bad time label {label!r}, expected HH:MM")
    if not 0 <= value <= 24 * 60:
        raise ParseError(f"Time label {label!r} outside the day")
    return value


def parse_window(window):
    """"HH:MM-HH:MM" or a preset name -> (start, end) in minutes."""
    window = WINDOW_PRESETS.get(window, window)
    try:
        start, end = window.split("-")
    except (AttributeError, ValueError):
        raise ValueError(f"Window {window!r} is neither a preset {sorted(WINDOW_PRESETS)} nor HH:MM-HH:MM")
    start, end = _minutes(start), _minutes(end)
    if end <= start:
        raise ValueError(f"Window {window} ends before it starts")
    return start, end


def load_profiles(path, network, window=None, step_minutes=15):
    """
    Load multipliers per bus and availability per IBDG over a time window.

    Args:
        path: CSV file or a bundled case name; one "time" column, one column
            per load bus id and one per IBDG availability id
        window: "HH:MM-HH:MM" or preset; None keeps every row
        step_minutes: step length, a multiple of the file's resolution
    """
    path = BUNDLED_PROFILES.get(path, path)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"No profile file at '{path}'")
    try:
        df = pd.read_csv(path, dtype={"time": str})
    except (pd.errors.ParserError, pd.errors.EmptyDataError) as err:
        raise ParseError(f"{path}: {err}")
    if "time" not in df.columns:
        raise ParseError(f"{path}: no 'time' column")
    df.columns = [str(col).strip() for col in df.columns]

    bus_cols = [str(bus.id) for bus in network.buses[1:]]
    unit_cols = [str(ibdg.availability) for ibdg in network.ibdgs]
    for col in bus_cols + unit_cols:
        if col not in df.columns:
            raise UnknownId(f"{path}: no column for id '{col}'")
    extra = set(df.columns) - set(bus_cols) - set(unit_cols) - {"time"}
    if extra:
        raise UnknownId(f"{path}: columns {sorted(extra)} match no bus or IBDG")

    df["minute"] = [_minutes(label) for label in df["time"]]
    if window is not None:
        start, end = parse_window(window)
        if (end - start) % step_minutes:
            raise ValueError(f"Window {window} is not a whole number of {step_minutes}-minute steps")
        T = (end - start) // step_minutes
        offset = df["minute"] - start
        df = df[(offset >= 0) & (df["minute"] < end) & (offset % step_minutes == 0)]
        if len(df) != T:
            raise LengthMismatch(
                f"{path}: window {window} needs {T} steps of {step_minutes} min, found {len(df)}"
            )
    if df[bus_cols + unit_cols].isnull().values.any():
        missing = df[bus_cols + unit_cols].columns[df[bus_cols + unit_cols].isnull().any()].tolist()
        raise ParseError(f"{path}: empty values in columns {missing}")

    p_max = np.array([ibdg.p_max for ibdg in network.ibdgs], dtype=float)
    availability = df[unit_cols].to_numpy(dtype=float) * p_max
    return ScenarioHorizon(
        timesteps=df["time"].str.strip().tolist(),
        step_minutes=step_minutes,
        load_multipliers=df[bus_cols].to_numpy(dtype=float),
        availability=availability.reshape(len(df), len(network.ibdgs)),
    )
