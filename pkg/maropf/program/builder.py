import numpy as np

from maropf.droop import DroopParameters
from maropf.program.conic import Affine, ConicProgram, ObjectiveWeights
from maropf.utils import MaropfError

FLOW_BOX = 100.0
MODES = ("ropf", "maropf")


class InfeasibleBigM(MaropfError, ValueError):
    pass


class UnknownPair(MaropfError, ValueError):
    pass


def line_flow_caps(network, topo, peak=1.0, factor=1.1):
    """
    P^max, Q^max per line: explicit case caps, else `factor` times the
    downstream peak load plus downstream installed IBDG capability.
    """
    inc = network.incidence()
    gen_p = inc @ np.array([ibdg.p_max for ibdg in network.ibdgs], dtype=float)
    gen_q = inc @ np.array(
        [max(abs(ibdg.q_min), abs(ibdg.q_max)) for ibdg in network.ibdgs], dtype=float
    )
    p_cap = factor * topo.H @ (network.load_p * peak + gen_p)
    q_cap = factor * topo.H @ (np.abs(network.load_q) * peak + gen_q)
    for line in network.lines:
        if line.p_max is not None:
            p_cap[line.id - 1] = line.p_max
        if line.q_max is not None:
            q_cap[line.id - 1] = line.q_max
    return p_cap, q_cap


class ProgramBuilder:
    """
    Emits R-OPF / MAR-OPF programs over a horizon, optionally with the
    droop references as decision variables shared across steps.

    Args:
        slopes: DroopSlopes; None builds a plain OPF with free injections
        mode: "ropf" (full system only) or "maropf" (full plus bounding systems)
        big_m: scalar override for both big-M constants
        receiving_end_cones: bound receiving-end flows (P_up - r f_up) against v
    """

    def __init__(
        self,
        network,
        topo,
        horizon,
        weights=None,
        slopes=None,
        mode="maropf",
        big_m=None,
        receiving_end_cones=False,
        flow_box=FLOW_BOX,
    ):
        if mode not in MODES:
            raise ValueError(f"Unknown mode {mode}, expected one of {MODES}")
        self.network = network
        self.topo = topo
        self.horizon = horizon
        self.weights = weights if weights is not None else ObjectiveWeights()
        self.slopes = slopes
        self.mode = mode
        self.big_m = big_m
        self.receiving_end_cones = receiving_end_cones
        self.flow_box = flow_box
        self.aux = mode == "maropf"

        buses = [ibdg.bus for ibdg in network.ibdgs if ibdg.dispatchable]
        if len(set(buses)) != len(buses):
            raise ValueError(f"At most one dispatchable unit per bus, got buses {buses}")
        peak = float(np.max(horizon.load_multipliers)) if horizon.T else 1.0
        self.p_cap, self.q_cap = line_flow_caps(network, topo, max(peak, 1.0))

    def build(self):
        network = self.network
        name = f"{network.name}-{self.mode}{'-droop' if self.slopes is not None else ''}"
        self.program = ConicProgram(name)
        self.breakdown = {"pc": [], "pl": [], "v": []}
        self.objective = {}
        self.objective_constant = 0.0

        self.refs = {}
        if self.slopes is not None:
            self._declare_references()
        for t in range(self.horizon.T):
            self._emit_step(t)

        program = self.program
        program.objective = Affine(self.objective, self.objective_constant)
        program.info = {
            "mode": self.mode,
            "droop": self.slopes is not None,
            "T": self.horizon.T,
            "n_line": network.n_line,
            "receiving_end_cones": self.receiving_end_cones,
            "weights": self.weights.to_list(),
            "breakdown": self.breakdown,
            "droop_units": [(ibdg.id, ibdg.bus) for ibdg in network.droop_ibdgs],
        }
        return program

    def _cost(self, var, coef):
        self.objective[var] = self.objective.get(var, 0.0) + coef

    def _declare_references(self):
        alpha_p, alpha_q = self.slopes.alpha_p, self.slopes.alpha_q
        for j, ibdg in enumerate(self.network.droop_ibdgs):
            bus = self.network.buses[ibdg.bus]
            self.refs[ibdg.id] = {
                "v0p": self.program.add_variable("v0p", ibdg.bus, None, bus.v_min, bus.v_max),
                "v0q": self.program.add_variable("v0q", ibdg.bus, None, bus.v_min, bus.v_max),
                "qg0": self.program.add_variable("qg0", ibdg.bus, None, -self.flow_box, self.flow_box),
                "alpha_p": float(alpha_p[j]),
                "alpha_q": float(alpha_q[j]),
            }

    def _big_m(self, ibdg, alpha_p):
        bus = self.network.buses[ibdg.bus]
        span = bus.v_max - bus.v_min
        m_v = 2.0 * span if self.big_m is None else float(self.big_m)
        m_p = 2.0 * (ibdg.p_max + alpha_p * bus.v_max) if self.big_m is None else float(self.big_m)
        if m_v < span:
            raise InfeasibleBigM(f"Unit {ibdg.id}: M={m_v} below the voltage range {span}")
        if m_p < ibdg.p_max + alpha_p * span:
            raise InfeasibleBigM(
                f"Unit {ibdg.id}: M={m_p} below the droop range {ibdg.p_max + alpha_p * span}"
            )
        return m_v, m_p

    def _declare_lines(self, t):
        prog = self.program
        box = self.flow_box
        ids = {}
        for line in self.network.lines:
            l = line.id
            bus = self.network.buses[l]
            var = {
                "v": prog.add_variable("v", l, t, bus.v_min, bus.v_max),
                "f": prog.add_variable("f", l, t, 0.0, line.i_max),
                "P": prog.add_variable("P", l, t, -box, box),
                "Q": prog.add_variable("Q", l, t, -box, box),
                "v_dev": prog.add_variable("v_dev", l, t, 0.0, box),
            }
            if self.aux:
                var["v_hat"] = prog.add_variable("v_hat", l, t, bus.v_min, bus.v_max)
                var["P_hat"] = prog.add_variable("P_hat", l, t, -box, box)
                var["Q_hat"] = prog.add_variable("Q_hat", l, t, -box, box)
                var["P_low"] = prog.add_variable("P_low", l, t, -box, box)
                var["Q_low"] = prog.add_variable("Q_low", l, t, -box, box)
                var["P_up"] = prog.add_variable("P_up", l, t, -box, self.p_cap[l - 1])
                var["Q_up"] = prog.add_variable("Q_up", l, t, -box, self.q_cap[l - 1])
                var["f_up"] = prog.add_variable("f_up", l, t, 0.0, line.i_max)
            ids[l] = var
        return ids

    def _declare_injections(self, t):
        """
        Generation per bus, as variable terms plus a constant, for the full
        and the bounding (hat) systems.
        """
        prog = self.program
        p_ava = self.horizon.p_ava(t)
        full = {}
        hat = {}

        def put(store, bus, p_var=None, q_var=None, p_const=0.0):
            entry = store.setdefault(bus, {"p": {}, "q": {}, "p0": 0.0})
            if p_var is not None:
                entry["p"][p_var] = entry["p"].get(p_var, 0.0) + 1.0
            if q_var is not None:
                entry["q"][q_var] = entry["q"].get(q_var, 0.0) + 1.0
            entry["p0"] += p_const

        units = []
        for j, ibdg in enumerate(self.network.ibdgs):
            avail = float(p_ava[j])
            if not ibdg.dispatchable:
                put(full, ibdg.bus, p_const=max(avail, 0.0))
                put(hat, ibdg.bus, p_const=max(avail, 0.0))
                continue
            online = avail > 0
            droop = self.slopes is not None
            # pg <= p_ava holds at every integer point of the droop rows
            p_hi = min(avail, ibdg.p_max)
            pg = prog.add_variable("pg", ibdg.bus, t, 0.0, p_hi if online else 0.0)
            qg = prog.add_variable(
                "qg", ibdg.bus, t, ibdg.q_min if online else 0.0, ibdg.q_max if online else 0.0
            )
            unit = {"ibdg": ibdg, "avail": avail, "online": online, "pg": pg, "qg": qg}
            if droop and self.aux:
                alpha = self.refs[ibdg.id]["alpha_p"]
                bus_v_max = self.network.buses[ibdg.bus].v_max
                lo = -ibdg.p_max - alpha * bus_v_max
                unit["pg_hat"] = prog.add_variable(
                    "pg_hat", ibdg.bus, t, lo if online else 0.0, p_hi if online else 0.0
                )
                box = self.flow_box if online else 0.0
                unit["qg_hat"] = prog.add_variable("qg_hat", ibdg.bus, t, -box, box)
            else:
                unit["pg_hat"], unit["qg_hat"] = pg, qg
            if droop:
                unit["y"] = prog.add_variable("y", ibdg.bus, t, 0.0, 1.0 if online else 0.0, binary=True)
            put(full, ibdg.bus, pg, qg)
            put(hat, ibdg.bus, unit["pg_hat"], unit["qg_hat"])
            units.append(unit)
        return full, hat, units

    @staticmethod
    def _split(store, bus):
        """Generation at a bus as (p terms, q terms, p const, q const)."""
        entry = store.get(bus)
        if entry is None:
            return {}, {}, 0.0, 0.0
        return entry["p"], entry["q"], entry["p0"], 0.0

    def _kcl(self, l, t, flow, children, shunt, shunt_var, loss, loss_var, gen_terms, load, gen_const, tag):
        terms = {flow[l]: 1.0}
        for c in children:
            terms[flow[c]] = terms.get(flow[c], 0.0) - 1.0
        if shunt and shunt_var is not None:
            terms[shunt_var] = terms.get(shunt_var, 0.0) - shunt
        if loss and loss_var is not None:
            terms[loss_var] = terms.get(loss_var, 0.0) - loss
        for var, coef in gen_terms.items():
            terms[var] = terms.get(var, 0.0) + coef
        self.program.add_row(terms, "==", load - gen_const, (tag, l, t))

    def _kvl(self, line, t, v, v_up, P, Q, f, tag):
        terms = {v: 1.0, P: 2.0 * line.r, Q: 2.0 * line.x}
        rhs = 0.0
        if v_up is None:
            rhs = self.network.v0
        else:
            terms[v_up] = terms.get(v_up, 0.0) - 1.0
        if f is not None:
            terms[f] = -line.z2
        self.program.add_row(terms, "==", rhs, (tag, line.id, t))

    def _v_up(self, ids, line, key="v"):
        return None if line.up == 0 else ids[line.up][key]

    def _side(self, var):
        return Affine({var: 1.0}) if var is not None else Affine(constant=self.network.v0)

    def _emit_step(self, t):
        network = self.network
        prog = self.program
        ids = self._declare_lines(t)
        full, hat, units = self._declare_injections(t)
        p_load, q_load = self.horizon.loads(network, t)
        children = self.topo.children

        for line in network.lines:
            l = line.id
            i = l - 1
            g, b = network.shunt_g[i], network.shunt_b[i]
            var = ids[l]
            kids = children[l]
            p_terms, q_terms, p_const, q_const = self._split(full, l)
            v_up = self._v_up(ids, line)

            P = {k: ids[k]["P"] for k in [l] + kids}
            Q = {k: ids[k]["Q"] for k in [l] + kids}
            self._kcl(l, t, P, kids, g, var["v"], line.r, var["f"], p_terms, p_load[i], p_const, "kcl_p")
            self._kcl(l, t, Q, kids, b, var["v"], line.x, var["f"], q_terms, q_load[i], q_const, "kcl_q")
            self._kvl(line, t, var["v"], v_up, var["P"], var["Q"], var["f"], "kvl")
            prog.add_cone(
                [Affine({var["P"]: 1.0}), Affine({var["Q"]: 1.0})],
                Affine({var["f"]: 1.0}),
                self._side(v_up),
                ("flow", l, t),
            )

            if self.aux:
                hp_terms, hq_terms, hp_const, hq_const = self._split(hat, l)
                for kind, load, shunt, gen, const in (
                    ("P", p_load[i], g, hp_terms, hp_const),
                    ("Q", q_load[i], b, hq_terms, hq_const),
                ):
                    flows = {k: ids[k][f"{kind}_hat"] for k in [l] + kids}
                    self._kcl(l, t, flows, kids, shunt, var["v_hat"], 0.0, None, gen, load, const, f"hat_{kind}")
                self._kvl(line, t, var["v_hat"], self._v_up(ids, line, "v_hat"), var["P_hat"], var["Q_hat"], None, "hat_kvl")

                for kind, load, shunt, gen, const, loss in (
                    ("P", p_load[i], g, p_terms, p_const, line.r),
                    ("Q", q_load[i], b, q_terms, q_const, line.x),
                ):
                    low = {k: ids[k][f"{kind}_low"] for k in [l] + kids}
                    self._kcl(l, t, low, kids, shunt, var["v"], 0.0, None, gen, load, const, f"low_{kind}")
                    up = {k: ids[k][f"{kind}_up"] for k in [l] + kids}
                    self._kcl(l, t, up, kids, shunt, var["v"], loss, var["f_up"], gen, load, const, f"up_{kind}")

                prog.add_row({var["P"]: 1.0, var["P_up"]: -1.0}, "<=", 0.0, ("cap_P", l, t))
                prog.add_row({var["Q"]: 1.0, var["Q_up"]: -1.0}, "<=", 0.0, ("cap_Q", l, t))
                self._bound_cones(line, t, var, v_up)

            target = network.v_target[i]
            thr = network.v_threshold[i]
            prog.add_row({var["v_dev"]: 1.0, var["v"]: -1.0}, ">=", -(target + thr), ("vdev_hi", l, t))
            prog.add_row({var["v_dev"]: 1.0, var["v"]: 1.0}, ">=", target - thr, ("vdev_lo", l, t))

            if self.weights.w_pl > 0 and line.r > 0:
                self._cost(var["f"], self.weights.w_pl * line.r)
            self.breakdown["pl"].append((line.r, var["f"]))
            if self.weights.w_v > 0:
                self._cost(var["v_dev"], self.weights.w_v)
            self.breakdown["v"].append(var["v_dev"])

        for unit in units:
            self._emit_unit(unit, ids, t)

    def _bound_cones(self, line, t, var, v_up):
        f_up = Affine({var["f_up"]: 1.0})
        if self.receiving_end_cones:
            sides = {
                "P_up": Affine({var["P_up"]: 1.0, var["f_up"]: -line.r}),
                "Q_up": Affine({var["Q_up"]: 1.0, var["f_up"]: -line.x}),
            }
            denominator = Affine({var["v"]: 1.0})
        else:
            sides = {"P_up": Affine({var["P_up"]: 1.0}), "Q_up": Affine({var["Q_up"]: 1.0})}
            denominator = self._side(v_up)
        sides["P_low"] = Affine({var["P_low"]: 1.0})
        sides["Q_low"] = Affine({var["Q_low"]: 1.0})
        for a_kind in ("P_up", "P_low"):
            for b_kind in ("Q_up", "Q_low"):
                self.program.add_cone(
                    [sides[a_kind], sides[b_kind]],
                    f_up,
                    denominator,
                    ("fbar", line.id, t, a_kind, b_kind),
                )

    def _emit_unit(self, unit, ids, t):
        prog = self.program
        ibdg = unit["ibdg"]
        pg, qg = unit["pg"], unit["qg"]
        avail = unit["avail"]
        if not unit["online"]:
            return

        w_pc = self.weights.w_pc
        if w_pc > 0:
            self._cost(pg, -w_pc)
            self.objective_constant += w_pc * avail
        self.breakdown["pc"].append((avail, pg))

        slope = ibdg.pf_slope
        prog.add_row({qg: 1.0, pg: -slope}, "<=", 0.0, ("wedge_hi", ibdg.bus, t))
        prog.add_row({qg: -1.0, pg: -slope}, "<=", 0.0, ("wedge_lo", ibdg.bus, t))
        s_max = Affine(constant=ibdg.s_max)
        prog.add_cone([Affine({pg: 1.0}), Affine({qg: 1.0})], s_max, s_max, ("apparent", ibdg.bus, t))

        if self.slopes is None:
            return
        ref = self.refs[ibdg.id]
        alpha_p, alpha_q = ref["alpha_p"], ref["alpha_q"]
        m_v, m_p = self._big_m(ibdg, alpha_p)
        y = unit["y"]
        v = ids[ibdg.bus]["v"]
        v0p, v0q, qg0 = ref["v0p"], ref["v0q"], ref["qg0"]

        prog.add_row({v: 1.0, v0p: -1.0, y: -m_v}, "<=", 0.0, ("act_on", ibdg.bus, t))
        prog.add_row({v0p: 1.0, v: -1.0, y: m_v}, "<=", m_v, ("act_off", ibdg.bus, t))
        prog.activations.append((y, v, v0p, m_v))

        sides = [("", pg, qg, v)]
        if self.aux:
            sides.append(("hat_", unit["pg_hat"], unit["qg_hat"], ids[ibdg.bus]["v_hat"]))
        for prefix, p_var, q_var, v_var in sides:
            prog.add_row(
                {p_var: 1.0, v_var: alpha_p, v0p: -alpha_p, y: m_p},
                "<=",
                avail + m_p,
                (f"{prefix}droop_p_hi", ibdg.bus, t),
            )
            prog.add_row(
                {p_var: -1.0, v_var: -alpha_p, v0p: alpha_p, y: m_p},
                "<=",
                -avail + m_p,
                (f"{prefix}droop_p_lo", ibdg.bus, t),
            )
            prog.add_row({p_var: 1.0, y: -m_p}, "<=", avail, (f"{prefix}flat_p_hi", ibdg.bus, t))
            prog.add_row({p_var: -1.0, y: -m_p}, "<=", -avail, (f"{prefix}flat_p_lo", ibdg.bus, t))
            prog.add_row(
                {q_var: 1.0, qg0: -1.0, v_var: alpha_q, v0q: -alpha_q},
                "==",
                0.0,
                (f"{prefix}droop_q", ibdg.bus, t),
            )


def build_ropf(network, topo, horizon, t=0, weights=None):
    return ProgramBuilder(network, topo, horizon.snapshot(t), weights, mode="ropf").build()


def build_maropf(network, topo, horizon, t=0, weights=None, receiving_end_cones=False):
    return ProgramBuilder(
        network,
        topo,
        horizon.snapshot(t),
        weights,
        mode="maropf",
        receiving_end_cones=receiving_end_cones,
    ).build()


def build_droop_design(
    network,
    topo,
    horizon,
    slopes,
    weights=None,
    mode="maropf",
    big_m=None,
    receiving_end_cones=False,
):
    if horizon.T < 1:
        raise ValueError("Droop design needs at least one time step")
    return ProgramBuilder(
        network,
        topo,
        horizon,
        weights,
        slopes=slopes,
        mode=mode,
        big_m=big_m,
        receiving_end_cones=receiving_end_cones,
    ).build()


def apply_refinement(program, Wp, Wq):
    """
    Replaces the lower-bound flow by the lossless flow inside the f_up cones
    of every (line, step) pair in Wp (active) and Wq (reactive).
    """
    vmap = program.vmap
    for kind, pairs in (("P_hat", Wp), ("Q_hat", Wq)):
        for l, t in pairs:
            if (kind, l, t) not in vmap:
                raise UnknownPair(f"No {kind} variable for line {l} at step {t}")
    refined = program.copy()
    if not Wp and not Wq:
        return refined
    for cone in refined.cones:
        meta = cone.meta
        if meta is None or meta[0] != "fbar":
            continue
        _, l, t, a_kind, b_kind = meta
        if a_kind == "P_low" and (l, t) in Wp:
            cone.u[0] = Affine({vmap[("P_hat", l, t)]: 1.0})
            a_kind = "P_hat"
        if b_kind == "Q_low" and (l, t) in Wq:
            cone.u[1] = Affine({vmap[("Q_hat", l, t)]: 1.0})
            b_kind = "Q_hat"
        cone.meta = ("fbar", l, t, a_kind, b_kind)
    refined.info = dict(refined.info)
    refined.info["refined"] = {"Wp": sorted(Wp), "Wq": sorted(Wq)}
    return refined


def objective_breakdown(program, x):
    """(F_obj, F_pc, F_pl, F_v) recombined under the program's weights."""
    parts = program.info["breakdown"]
    f_pc = sum(avail - x[var] for avail, var in parts["pc"])
    f_pl = sum(r * x[var] for r, var in parts["pl"])
    f_v = sum(x[var] for var in parts["v"])
    w_pc, w_pl, w_v = program.info["weights"]
    return {
        "F_obj": w_pc * f_pc + w_pl * f_pl + w_v * f_v,
        "F_pc": float(f_pc),
        "F_pl": float(f_pl),
        "F_v": float(f_v),
    }


def droop_parameters(program, network, slopes, x):
    """DroopParameters per droop unit id read off a solution vector."""
    vmap = program.vmap
    out = {}
    for ibdg, a_p, a_q in zip(network.droop_ibdgs, slopes.alpha_p, slopes.alpha_q):
        out[ibdg.id] = DroopParameters(
            alpha_p=float(a_p),
            alpha_q=float(a_q),
            v0p=float(x[vmap[("v0p", ibdg.bus, None)]]),
            v0q=float(x[vmap[("v0q", ibdg.bus, None)]]),
            q_g0=float(x[vmap[("qg0", ibdg.bus, None)]]),
        )
    return out
