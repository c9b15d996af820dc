import json
import os

import numpy as np
import pandas as pd

from maropf.droop import DroopParameters, ExactDroopCurve
from maropf.grid.constants import SCHEMA_VERSION
from maropf.powerflow.state import SecurityVerdict
from maropf.preprocessing.case_loader import ParseError, SchemaVersionUnsupported

FIELDS = (
    "command",
    "scenario",
    "config",
    "objective",
    "droop",
    "verdicts",
    "conditions",
    "solver",
    "refinement",
    "comparison",
)


class RunReport:
    """
    Everything a run produced, held as plain JSON-ready values.

    Args:
        scenario: case name, window, timesteps, mode
        objective: F_obj, F_pc, F_pl, F_v and the weights they were combined with
        droop: unit id -> {"bus", "approx", "exact"}
        verdicts: one SecurityVerdict dict per step
    """

    def __init__(self, command, schema_version=SCHEMA_VERSION, **fields):
        unknown = set(fields) - set(FIELDS)
        if unknown:
            raise ValueError(f"Unknown report fields {sorted(unknown)}")
        self.schema_version = schema_version
        self.command = command
        for name in FIELDS[1:]:
            setattr(self, name, _plain(fields.get(name)))

    @property
    def security(self):
        """Verdict merged over every step."""
        if not self.verdicts:
            return None
        merged = SecurityVerdict(-np.inf, np.inf, 0.0, [])
        for step in self.verdicts:
            verdict = SecurityVerdict.from_dict(step)
            merged.worst_v_hi = max(merged.worst_v_hi, verdict.worst_v_hi)
            merged.worst_v_lo = min(merged.worst_v_lo, verdict.worst_v_lo)
            merged.worst_current_ratio = max(merged.worst_current_ratio, verdict.worst_current_ratio)
            merged.violations.extend(verdict.violations)
        return merged

    @property
    def ok(self):
        security = self.security
        return security is None or security.ok

    def breakdown_error(self):
        """|F_obj - w . (F_pc, F_pl, F_v)|."""
        obj = self.objective
        w_pc, w_pl, w_v = obj["weights"]
        return abs(obj["F_obj"] - (w_pc * obj["F_pc"] + w_pl * obj["F_pl"] + w_v * obj["F_v"]))

    def to_dict(self):
        out = {"schema_version": self.schema_version}
        for name in FIELDS:
            out[name] = getattr(self, name)
        return out

    @classmethod
    def from_dict(cls, data):
        version = data.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionUnsupported(f"Report schema version {version}, expected {SCHEMA_VERSION}")
        fields = {name: data.get(name) for name in FIELDS[1:]}
        return cls(data["command"], version, **fields)

    def __eq__(self, other):
        return isinstance(other, RunReport) and self.to_dict() == other.to_dict()


def _plain(value):
    """Numpy scalars/arrays and tuples to JSON types."""
    if isinstance(value, dict):
        return {str(key): _plain(v) for key, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.bool_):
        return bool(value)
    if isinstance(value, (np.floating, np.integer)):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


def save_report(report, path):
    with open(path, "w") as f:
        json.dump(report.to_dict(), f, indent=2, sort_keys=True)


def load_report(path):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"No report at '{path}'")
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as err:
            raise ParseError(f"{path}:{err.lineno}:{err.colno}: {err.msg}")
    return RunReport.from_dict(data)


def droop_entries(network, params, curves):
    """Both coordinate systems per unit, as stored in reports and parameter files."""
    entries = {}
    for ibdg in network.droop_ibdgs:
        if ibdg.id not in params:
            continue
        entries[ibdg.id] = {
            "bus": ibdg.bus,
            "approx": params[ibdg.id].to_dict(),
            "exact": curves[ibdg.id].to_dict(),
        }
    return entries


def save_droop_parameters(path, network, params, curves):
    data = {
        "schema_version": SCHEMA_VERSION,
        "case": network.name,
        "units": droop_entries(network, params, curves),
    }
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)


def load_droop_parameters(path):
    """
    Accepts a parameter file or a stored optimize report.
    Returns (params, curves), dicts keyed by unit id.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"No droop parameter file at '{path}'")
    with open(path) as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as err:
            raise ParseError(f"{path}:{err.lineno}:{err.colno}: {err.msg}")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionUnsupported(f"{path}: schema version {version}, expected {SCHEMA_VERSION}")
    units = data.get("units", data.get("droop"))
    if units is None:
        raise ParseError(f"{path}: no 'units' or 'droop' section")
    params, curves = {}, {}
    for unit_id, entry in units.items():
        try:
            params[unit_id] = DroopParameters.from_dict(entry["approx"])
            curves[unit_id] = ExactDroopCurve.from_dict(entry["exact"])
        except KeyError as err:
            raise ParseError(f"{path}: units.{unit_id} lacks field {err}")
    return params, curves


def series_frame(timesteps, states, solution=None):
    """
    Per-step extremes of the oracle states, next to the optimizer's v, v_hat,
    f and f_up when a solution is given. Voltages are magnitudes.
    """
    rows = []
    for t, (label, state) in enumerate(zip(timesteps, states)):
        row = {
            "time": label,
            "v_max_oracle": float(np.sqrt(state.v.max())),
            "v_min_oracle": float(np.sqrt(state.v.min())),
            "f_max_oracle": float(state.f.max(initial=0.0)),
        }
        if solution is not None:
            for kind, column, root in (
                ("v", "v_max_opt", True),
                ("v_hat", "v_hat_max", True),
                ("f", "f_max_opt", False),
                ("f_up", "f_bar_max", False),
            ):
                values = solution.vector(kind, t)
                peak = np.nanmax(values) if np.any(np.isfinite(values)) else np.nan
                row[column] = float(np.sqrt(peak)) if root and np.isfinite(peak) else float(peak)
        rows.append(row)
    return pd.DataFrame(rows)


def write_series(path, frame):
    frame.to_csv(path, index=False, float_format="%.8f")


def render_report(report):
    """Plain-text summary of a stored report."""
    lines = [f"maropf {report.command} report (schema {report.schema_version})"]
    scenario = report.scenario or {}
    if scenario:
        lines.append(
            f"case {scenario.get('case')} window {scenario.get('window')} "
            f"steps {len(scenario.get('timesteps') or [])} mode {scenario.get('mode')}"
        )
    if report.objective:
        obj = report.objective
        lines.append(
            f"F_obj {obj['F_obj']:.6f}  F_pc {obj['F_pc']:.6f}  F_pl {obj['F_pl']:.6f}  "
            f"F_v {obj['F_v']:.6f}  weights {obj['weights']}"
        )
    if report.conditions:
        flags = " ".join(f"{key}={report.conditions[key]}" for key in sorted(report.conditions) if key.startswith("pass"))
        lines.append(f"conditions {flags}")
    security = report.security
    if security is not None:
        lines.append(
            f"voltage max {security.worst_v_hi:.4f} min {security.worst_v_lo:.4f}  "
            f"current ratio {security.worst_current_ratio:.4f}  violations {len(security.violations)}"
        )
        for kind, index, t, amount in security.violations[:10]:
            lines.append(f"  {kind} line {index} step {t}: {amount:.3e}")
    if report.droop:
        for unit_id in sorted(report.droop):
            entry = report.droop[unit_id]["exact"]
            lines.append(
                f"  {unit_id}: alpha_p* {entry['alpha_p_star']:.4f} alpha_q* {entry['alpha_q_star']:.4f} "
                f"vref_p* {entry['vref_p_star']:.4f} vref_q* {entry['vref_q_star']:.4f} q_g0 {entry['q_g0']:.4f}"
            )
    if report.comparison:
        lines.append(comparison_text(report.comparison))
    return "\n".join(lines)


def comparison_text(rows):
    return pd.DataFrame(rows).to_string(index=False)
