import numpy as np

from maropf.grid.network import Bus, IbdgSpec, Line, RadialNetwork
from maropf.grid.topology import GridError


class NonPositiveBase(GridError):
    pass


def _bases(raw_case, bases):
    bases = bases if bases is not None else raw_case.get("bases", {})
    kv = float(bases.get("kv", 0.0))
    mva = float(bases.get("mva", 0.0))
    if kv <= 0 or mva <= 0:
        raise NonPositiveBase(f"Bases must be strictly positive, got kv={kv}, mva={mva}")
    return kv, mva


def _squared_limit(entry, key, kv, default):
    if f"{key}_kv" in entry:
        return (float(entry[f"{key}_kv"]) / kv) ** 2
    return float(entry.get(key, default)) ** 2


def to_per_unit(raw_case, bases=None):
    """
    Converts a physical-unit case dictionary (kW, kvar, ohm, A, p.u. or kV
    voltage magnitudes) into a RadialNetwork in per-unit with squared
    voltage and current quantities.
    """
    kv, mva = _bases(raw_case, bases)
    z_base = kv ** 2 / mva
    s_base = 1000.0 * mva
    i_base = 1000.0 * mva / (np.sqrt(3) * kv)

    defaults = raw_case.get("defaults", {})
    buses = []
    for entry in raw_case["buses"]:
        merged = dict(defaults)
        merged.update(entry)
        target = float(merged.get("v_target", 1.0))
        threshold = float(merged.get("v_threshold", 0.0))
        buses.append(
            Bus(
                id=merged["id"],
                load_p=float(merged.get("p_kw", 0.0)) / s_base,
                load_q=float(merged.get("q_kvar", 0.0)) / s_base,
                shunt_g=float(merged.get("g_kw", 0.0)) / s_base,
                shunt_b=float(merged.get("b_kvar", 0.0)) / s_base,
                v_min=_squared_limit(merged, "v_min", kv, 0.9),
                v_max=_squared_limit(merged, "v_max", kv, 1.05),
                v_target=target ** 2,
                v_threshold=(target + threshold) ** 2 - target ** 2,
                name=merged.get("name"),
            )
        )

    lines = []
    for entry in raw_case["lines"]:
        p_max = entry.get("p_max_kw")
        q_max = entry.get("q_max_kvar")
        lines.append(
            Line(
                id=entry["to"],
                up=entry["from"],
                r=float(entry["r_ohm"]) / z_base,
                x=float(entry["x_ohm"]) / z_base,
                i_max=(float(entry["ampacity_a"]) / i_base) ** 2,
                p_max=None if p_max is None else float(p_max) / s_base,
                q_max=None if q_max is None else float(q_max) / s_base,
            )
        )

    ibdgs = []
    for entry in raw_case.get("ibdgs", []):
        taylor = entry.get("taylor_v")
        ibdgs.append(
            IbdgSpec(
                id=entry["id"],
                bus=entry["bus"],
                dispatchable=entry.get("dispatchable", True),
                p_max=float(entry["p_max_kw"]) / s_base,
                q_min=float(entry.get("q_min_kvar", 0.0)) / s_base,
                q_max=float(entry.get("q_max_kvar", 0.0)) / s_base,
                s_max=float(entry.get("s_max_kva", entry["p_max_kw"])) / s_base,
                mu_min=float(entry.get("mu_min", 1.0)),
                taylor_v0=None if taylor is None else float(taylor) ** 2,
                availability=entry.get("availability"),
            )
        )

    return RadialNetwork(
        buses,
        lines,
        ibdgs,
        v0=float(raw_case.get("slack_v0", 1.0)) ** 2,
        bases={"kv": kv, "mva": mva},
        name=raw_case.get("name", ""),
    )


def to_physical(network):
    """Inverse of to_per_unit; limits are written as p.u. magnitudes."""
    kv, mva = _bases({"bases": network.bases}, None)
    z_base = kv ** 2 / mva
    s_base = 1000.0 * mva
    i_base = 1000.0 * mva / (np.sqrt(3) * kv)

    buses = []
    for bus in network.buses:
        target = np.sqrt(bus.v_target)
        buses.append(
            {
                "id": bus.id,
                "name": bus.name,
                "p_kw": bus.load_p * s_base,
                "q_kvar": bus.load_q * s_base,
                "g_kw": bus.shunt_g * s_base,
                "b_kvar": bus.shunt_b * s_base,
                "v_min": np.sqrt(bus.v_min),
                "v_max": np.sqrt(bus.v_max),
                "v_target": target,
                "v_threshold": np.sqrt(bus.v_target + bus.v_threshold) - target,
            }
        )
    lines = []
    for line in network.lines:
        entry = {
            "from": line.up,
            "to": line.id,
            "r_ohm": line.r * z_base,
            "x_ohm": line.x * z_base,
            "ampacity_a": np.sqrt(line.i_max) * i_base,
        }
        if line.p_max is not None:
            entry["p_max_kw"] = line.p_max * s_base
        if line.q_max is not None:
            entry["q_max_kvar"] = line.q_max * s_base
        lines.append(entry)
    ibdgs = []
    for ibdg in network.ibdgs:
        entry = {
            "id": ibdg.id,
            "bus": ibdg.bus,
            "dispatchable": ibdg.dispatchable,
            "p_max_kw": ibdg.p_max * s_base,
            "q_min_kvar": ibdg.q_min * s_base,
            "q_max_kvar": ibdg.q_max * s_base,
            "s_max_kva": ibdg.s_max * s_base,
            "mu_min": ibdg.mu_min,
            "availability": ibdg.availability,
        }
        if ibdg.taylor_v0 is not None:
            entry["taylor_v"] = np.sqrt(ibdg.taylor_v0)
        ibdgs.append(entry)
    return {
        "schema_version": 1,
        "name": network.name,
        "bases": {"kv": kv, "mva": mva},
        "slack_v0": np.sqrt(network.v0),
        "buses": buses,
        "lines": lines,
        "ibdgs": ibdgs,
    }
