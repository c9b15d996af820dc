import copy

import numpy as np


class Bus:
    """
    Args:
        id: int, bus index (0 is the slack)
        load_p, load_q: constant-power consumption, p.u.
        shunt_g, shunt_b: constant-impedance consumption at 1 p.u., p.u.
        v_min, v_max: squared voltage limits, p.u.^2
        v_target, v_threshold: squared target and deviation band, p.u.^2
    """

    def __init__(
        self,
        id,
        load_p=0.0,
        load_q=0.0,
        shunt_g=0.0,
        shunt_b=0.0,
        v_min=0.81,
        v_max=1.1025,
        v_target=1.0,
        v_threshold=0.0,
        name=None,
    ):
        if not 0 < v_min < v_max:
            raise ValueError(f"Bus {id}: need 0 < v_min < v_max, got {v_min}, {v_max}")
        if shunt_g < 0:
            raise ValueError(f"Bus {id}: negative shunt conductance {shunt_g}")
        if v_threshold < 0:
            raise ValueError(f"Bus {id}: negative voltage threshold {v_threshold}")
        self.id = int(id)
        self.load_p = float(load_p)
        self.load_q = float(load_q)
        self.shunt_g = float(shunt_g)
        self.shunt_b = float(shunt_b)
        self.v_min = float(v_min)
        self.v_max = float(v_max)
        self.v_target = float(v_target)
        self.v_threshold = float(v_threshold)
        self.name = name if name is not None else str(id)


class Line:
    """A line shares its index with its ending bus; `up` is the sending bus."""

    def __init__(self, id, up, r, x, i_max, p_max=None, q_max=None):
        if r < 0:
            raise ValueError(f"Line {id}: negative resistance {r}")
        if i_max <= 0:
            raise ValueError(f"Line {id}: ampacity must be positive, got {i_max}")
        self.id = int(id)
        self.up = int(up)
        self.r = float(r)
        self.x = float(x)
        self.i_max = float(i_max)
        self.p_max = None if p_max is None else float(p_max)
        self.q_max = None if q_max is None else float(q_max)

    @property
    def z2(self):
        return self.r ** 2 + self.x ** 2


class IbdgSpec:
    def __init__(
        self,
        id,
        bus,
        dispatchable,
        p_max,
        q_min,
        q_max,
        s_max,
        mu_min,
        taylor_v0=None,
        availability=None,
    ):
        if s_max < p_max:
            raise ValueError(f"IBDG {id}: s_max {s_max} below p_max {p_max}")
        if not 0 < mu_min <= 1:
            raise ValueError(f"IBDG {id}: power factor {mu_min} outside (0, 1]")
        self.id = str(id)
        self.bus = int(bus)
        self.dispatchable = bool(dispatchable)
        self.p_max = float(p_max)
        self.q_min = float(q_min)
        self.q_max = float(q_max)
        self.s_max = float(s_max)
        self.mu_min = float(mu_min)
        self.taylor_v0 = None if taylor_v0 is None else float(taylor_v0)
        # profile column holding p_ava
        self.availability = availability if availability is not None else self.id

    @property
    def pf_slope(self):
        return np.tan(np.arccos(self.mu_min))


class RadialNetwork:
    """
    Balanced radial network in per-unit. Line and bus vectors exclude the
    slack, so entry i of any vector belongs to line/bus i + 1.
    """

    def __init__(self, buses, lines, ibdgs=(), v0=1.0, bases=None, name=""):
        self.buses = sorted(buses, key=lambda bus: bus.id)
        self.lines = sorted(lines, key=lambda line: line.id)
        self.ibdgs = list(ibdgs)
        self.v0 = float(v0)
        self.bases = dict(bases) if bases else {"kv": 1.0, "mva": 1.0}
        self.name = name

    @property
    def n_bus(self):
        return len(self.buses)

    @property
    def n_line(self):
        return len(self.lines)

    def _line_vector(self, attr):
        return np.array([getattr(line, attr) for line in self.lines], dtype=float)

    def _bus_vector(self, attr):
        return np.array([getattr(bus, attr) for bus in self.buses[1:]], dtype=float)

    @property
    def r(self):
        return self._line_vector("r")

    @property
    def x(self):
        return self._line_vector("x")

    @property
    def z2(self):
        return self._line_vector("z2")

    @property
    def i_max(self):
        return self._line_vector("i_max")

    @property
    def up(self):
        return np.array([line.up for line in self.lines], dtype=int)

    @property
    def p_max(self):
        return self._line_vector("p_max")

    @property
    def q_max(self):
        return self._line_vector("q_max")

    @property
    def load_p(self):
        return self._bus_vector("load_p")

    @property
    def load_q(self):
        return self._bus_vector("load_q")

    @property
    def shunt_g(self):
        return self._bus_vector("shunt_g")

    @property
    def shunt_b(self):
        return self._bus_vector("shunt_b")

    @property
    def v_min(self):
        return self._bus_vector("v_min")

    @property
    def v_max(self):
        return self._bus_vector("v_max")

    @property
    def v_target(self):
        return self._bus_vector("v_target")

    @property
    def v_threshold(self):
        return self._bus_vector("v_threshold")

    @property
    def droop_ibdgs(self):
        return [ibdg for ibdg in self.ibdgs if ibdg.dispatchable]

    @property
    def fixed_ibdgs(self):
        return [ibdg for ibdg in self.ibdgs if not ibdg.dispatchable]

    def taylor_v0(self, ibdg):
        if ibdg.taylor_v0 is not None:
            return ibdg.taylor_v0
        return self.buses[ibdg.bus].v_max

    def incidence(self, ibdgs=None):
        """n_line x len(ibdgs) matrix placing each unit at its bus."""
        ibdgs = self.ibdgs if ibdgs is None else ibdgs
        inc = np.zeros((self.n_line, len(ibdgs)))
        for j, ibdg in enumerate(ibdgs):
            inc[ibdg.bus - 1, j] = 1.0
        return inc

    def scaled(self, load=1.0, generation=1.0):
        """Copy with loads and IBDG ratings multiplied by the given factors."""
        if load < 0 or generation < 0:
            raise ValueError(f"Scale factors must be non-negative: {load}, {generation}")
        other = copy.deepcopy(self)
        for bus in other.buses:
            bus.load_p *= load
            bus.load_q *= load
        for ibdg in other.ibdgs:
            ibdg.p_max *= generation
            ibdg.q_min *= generation
            ibdg.q_max *= generation
            ibdg.s_max *= generation
        return other


class ScenarioHorizon:
    """
    Args:
        timesteps: list of "HH:MM" labels
        step_minutes: int, step length
        load_multipliers: array (T, n_line), per-bus load scaling
        availability: array (T, n_ibdg), available active power in p.u.
    """

    def __init__(self, timesteps, step_minutes, load_multipliers, availability):
        self.timesteps = list(timesteps)
        self.step_minutes = int(step_minutes)
        self.load_multipliers = np.atleast_2d(np.asarray(load_multipliers, dtype=float))
        self.availability = np.atleast_2d(np.asarray(availability, dtype=float))
        T = len(self.timesteps)
        if self.load_multipliers.shape[0] != T or self.availability.shape[0] != T:
            raise ValueError(
                f"Profile lengths {self.load_multipliers.shape[0]}, "
                f"{self.availability.shape[0]} differ from horizon length {T}"
            )
        if np.any(self.load_multipliers < 0):
            raise ValueError("Load multipliers must be non-negative")
        if np.any(self.availability < 0):
            raise ValueError("Available power must be non-negative")

    @property
    def T(self):
        return len(self.timesteps)

    @classmethod
    def flat(cls, network, steps=1, load=1.0, availability=1.0, step_minutes=15):
        """Constant horizon; availability is a fraction of each unit's p_max."""
        p_max = np.array([ibdg.p_max for ibdg in network.ibdgs], dtype=float)
        return cls(
            timesteps=["%02d:%02d" % divmod(k * step_minutes, 60) for k in range(steps)],
            step_minutes=step_minutes,
            load_multipliers=np.full((steps, network.n_line), float(load)),
            availability=np.tile(availability * p_max, (steps, 1)),
        )

    def loads(self, network, t):
        mult = self.load_multipliers[t]
        return network.load_p * mult, network.load_q * mult

    def p_ava(self, t):
        return self.availability[t]

    def steps(self, start, stop):
        return ScenarioHorizon(
            self.timesteps[start:stop],
            self.step_minutes,
            self.load_multipliers[start:stop],
            self.availability[start:stop],
        )

    def snapshot(self, t):
        return self.steps(t, t + 1)

    def scaled(self, generation=1.0):
        """Copy with available power multiplied, matching RadialNetwork.scaled."""
        return ScenarioHorizon(
            self.timesteps, self.step_minutes, self.load_multipliers, generation * self.availability
        )
