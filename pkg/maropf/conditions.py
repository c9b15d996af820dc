import os
import warnings

import h5py
import numpy as np
import pandas as pd
import scipy.linalg

from maropf.grid.topology import build_topology, downstream_load
from maropf.powerflow.state import PowerFlowError
from maropf.powerflow.sweep import distflow_sweep
from maropf.utils import MaropfError, get_hash, tqdm

TOL_POS = 1e-12
TOL_NEG = 1e-12
CONDITIONS = ("8a", "8b", "8c", "8d")


class SingularSystem(MaropfError, np.linalg.LinAlgError):
    pass


class ZeroPathImpedance(MaropfError, ValueError):
    pass


class NoBreakFound(MaropfError, RuntimeError):
    pass


class DroopSlopes:
    """Slopes of the dispatchable units, aligned with network.droop_ibdgs."""

    def __init__(self, ids, alpha_p, alpha_q):
        self.ids = list(ids)
        self.alpha_p = np.asarray(alpha_p, dtype=float)
        self.alpha_q = np.asarray(alpha_q, dtype=float)

    def per_line(self, network):
        """Line vectors with the slopes placed at their buses."""
        ap = np.zeros(network.n_line)
        aq = np.zeros(network.n_line)
        for ibdg, a_p, a_q in zip(network.droop_ibdgs, self.alpha_p, self.alpha_q):
            ap[ibdg.bus - 1] += a_p
            aq[ibdg.bus - 1] += a_q
        return ap, aq

    def to_dict(self):
        return {
            ibdg_id: {"alpha_p": float(a_p), "alpha_q": float(a_q)}
            for ibdg_id, a_p, a_q in zip(self.ids, self.alpha_p, self.alpha_q)
        }

    @classmethod
    def from_dict(cls, network, data):
        ids = [ibdg.id for ibdg in network.droop_ibdgs]
        return cls(
            ids,
            [data[i]["alpha_p"] for i in ids],
            [data[i]["alpha_q"] for i in ids],
        )

    @classmethod
    def zeros(cls, network):
        ids = [ibdg.id for ibdg in network.droop_ibdgs]
        return cls(ids, np.zeros(len(ids)), np.zeros(len(ids)))


class FlowEnvelope:
    """Line flow caps, per-bus load and injection caps and v_min, all line vectors."""

    def __init__(self, p_max, q_max, pg_max, qg_max, p_load, q_load, v_min):
        self.p_max = np.asarray(p_max, dtype=float)
        self.q_max = np.asarray(q_max, dtype=float)
        self.pg_max = np.asarray(pg_max, dtype=float)
        self.qg_max = np.asarray(qg_max, dtype=float)
        self.p_load = np.asarray(p_load, dtype=float)
        self.q_load = np.asarray(q_load, dtype=float)
        self.v_min = np.asarray(v_min, dtype=float)

    def arrays(self):
        return (self.p_max, self.q_max, self.pg_max, self.qg_max, self.p_load, self.q_load, self.v_min)

    @classmethod
    def zero(cls, network):
        z = np.zeros(network.n_line)
        return cls(z, z, z, z, z, z, network.v_min)


class ConditionMatrices:
    def __init__(self, M1, M2, C, D, pi, rho, theta, E, H, K, det_sign, log_abs_det):
        self.M1 = M1
        self.M2 = M2
        self.C = C
        self.D = D
        self.pi = pi
        self.rho = rho
        self.theta = theta
        self.E = E
        self.H = H
        self.K = K
        self.det_sign = det_sign
        self.log_abs_det = log_abs_det


class ConditionReport:
    def __init__(self, norm_8a, min_D, norm_E, eta, pass_8a, pass_8b, pass_8c, pass_8d):
        self.norm_8a = norm_8a
        self.min_D = min_D
        self.norm_E = norm_E
        self.eta = eta
        self.pass_8a = pass_8a
        self.pass_8b = pass_8b
        self.pass_8c = pass_8c
        self.pass_8d = pass_8d

    @property
    def overall(self):
        return self.pass_8a and self.pass_8b and self.pass_8c and self.pass_8d

    @property
    def violated(self):
        flags = (self.pass_8a, self.pass_8b, self.pass_8c, self.pass_8d)
        return [name for name, ok in zip(CONDITIONS, flags) if not ok]

    def to_dict(self):
        return {
            "norm_8a": float(self.norm_8a),
            "min_D": float(self.min_D),
            "norm_E": float(self.norm_E),
            "eta": None if self.eta is None else float(self.eta),
            "pass_8a": bool(self.pass_8a),
            "pass_8b": bool(self.pass_8b),
            "pass_8c": bool(self.pass_8c),
            "pass_8d": bool(self.pass_8d),
            "overall": bool(self.overall),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["norm_8a"],
            data["min_D"],
            data["norm_E"],
            data["eta"],
            data["pass_8a"],
            data["pass_8b"],
            data["pass_8c"],
            data["pass_8d"],
        )


class ConditionCache:
    """h5 store of condition matrices keyed by a fingerprint of the inputs."""

    def __init__(self, db_dir="processed/conditions"):
        self.db_dir = db_dir
        os.makedirs(self.db_dir, exist_ok=True)

    def key(self, network, shunts, envelope):
        envelope = envelope if envelope is not None else FlowEnvelope.zero(network)
        return get_hash(network.r, network.x, network.up, shunts[0], shunts[1], *envelope.arrays())

    def filename(self, key):
        return os.path.join(self.db_dir, f"{key}.h5")

    def load(self, key):
        filename = self.filename(key)
        if not os.path.exists(filename):
            return None
        with h5py.File(filename, "r") as db:
            fields = {name: np.array(db[name]) for name in db.keys()}
        fields["det_sign"] = float(fields["det_sign"])
        fields["log_abs_det"] = float(fields["log_abs_det"])
        return ConditionMatrices(**fields)

    def save(self, key, matrices):
        with h5py.File(self.filename(key), "w") as db:
            for name, value in vars(matrices).items():
                db.create_dataset(name, data=value)


def effective_shunts(network, slopes=None, active=True):
    """Bus shunts plus droop admittances alpha_p + j alpha_q (alpha_p only when active)."""
    g = network.shunt_g.copy()
    b = network.shunt_b.copy()
    if slopes is not None:
        ap, aq = slopes.per_line(network)
        if active:
            g += ap
        b += aq
    return g, b


def flow_envelope(network, topo, scale=1.0, direction=None):
    """
    Injection envelope at `scale`. By default injection caps are the
    installed IBDG ratings; `direction` = (pg, qg) line vectors replaces them.
    Flow caps default to the downstream-load rule and scale along with the
    injections.
    """
    if direction is None:
        inc = network.incidence()
        pg = inc @ np.array([ibdg.p_max for ibdg in network.ibdgs], dtype=float)
        qg = inc @ np.array([ibdg.q_max for ibdg in network.ibdgs], dtype=float)
    else:
        pg, qg = direction
    p_cap, q_cap = downstream_load(network, topo)
    p_max = np.array([cap if line.p_max is None else line.p_max for line, cap in zip(network.lines, p_cap)])
    q_max = np.array([cap if line.q_max is None else line.q_max for line, cap in zip(network.lines, q_cap)])
    grow = max(scale, 1.0)
    return FlowEnvelope(
        grow * p_max,
        grow * q_max,
        scale * np.asarray(pg, dtype=float),
        scale * np.asarray(qg, dtype=float),
        network.load_p,
        network.load_q,
        network.v_min,
    )


def log_determinant(lu_piv):
    lu, piv = lu_piv
    diag = np.diag(lu)
    swaps = np.sum(piv != np.arange(len(piv)))
    sign = (-1.0) ** swaps * np.prod(np.sign(diag))
    with np.errstate(divide="ignore"):
        log_abs = float(np.sum(np.log(np.abs(diag))))
    return float(sign), log_abs


def compute_condition_matrices(network, topo, shunts, envelope=None, cache=None):
    if cache is not None:
        key = cache.key(network, shunts, envelope)
        cached = cache.load(key)
        if cached is not None:
            return cached

    n = network.n_line
    H = topo.H
    r, x, z2 = network.r, network.x, network.z2
    g, b = shunts
    M1 = 2.0 * np.diag(r) @ H @ np.diag(g)
    M2 = 2.0 * np.diag(x) @ H @ np.diag(b)
    K = np.eye(n) - topo.G.T + M1 + M2

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu_piv = scipy.linalg.lu_factor(K)
    pivots = np.abs(np.diag(lu_piv[0]))
    if n and pivots.min() <= 1e-14 * max(1.0, pivots.max()):
        raise SingularSystem("I - G^T + M1 + M2 is singular; condition (8a) fails")
    det_sign, log_abs_det = log_determinant(lu_piv)
    C = scipy.linalg.lu_solve(lu_piv, np.eye(n))

    inner = 2.0 * np.diag(r) @ H @ np.diag(r) + 2.0 * np.diag(x) @ H @ np.diag(x) - np.diag(z2)
    D = C @ inner

    envelope = envelope if envelope is not None else FlowEnvelope.zero(network)
    net_p = H @ (envelope.p_load - envelope.pg_max)
    net_q = H @ (envelope.q_load - envelope.qg_max)
    pi = np.maximum(envelope.p_max, np.abs(net_p)) / envelope.v_min
    rho = np.maximum(envelope.q_max, np.abs(net_q)) / envelope.v_min
    theta = pi ** 2 + rho ** 2
    E = 2.0 * np.diag(pi) @ H @ np.diag(r) + 2.0 * np.diag(rho) @ H @ np.diag(x) + np.diag(theta) @ D

    matrices = ConditionMatrices(M1, M2, C, D, pi, rho, theta, E, H, K, det_sign, log_abs_det)
    if cache is not None:
        cache.save(key, matrices)
    return matrices


def lossless_voltage(matrices, network, topo, p, q):
    """v_hat = C (v0 e - 2 diag(r) H p - 2 diag(x) H q) for net consumption p, q."""
    rhs = network.v0 * topo.e - 2.0 * network.r * (topo.H @ p) - 2.0 * network.x * (topo.H @ q)
    return matrices.C @ rhs


def check_conditions(matrices, tol_pos=TOL_POS, tol_neg=TOL_NEG):
    A = matrices.H.T @ (-matrices.M1 - matrices.M2)
    norm_8a = np.linalg.norm(A, "fro")
    D = matrices.D
    min_D = float(D.min()) if D.size else 0.0
    norm_E = np.linalg.norm(matrices.E, "fro")

    DE = D @ matrices.E
    positive = D > tol_pos
    if np.any(DE[~positive] > tol_pos):
        eta = None
    elif np.any(positive):
        eta = float(np.max(DE[positive] / D[positive]))
    else:
        eta = 0.0

    return ConditionReport(
        norm_8a=norm_8a,
        min_D=min_D,
        norm_E=norm_E,
        eta=eta,
        pass_8a=bool(norm_8a < 1.0),
        pass_8b=bool(min_D >= -tol_neg),
        pass_8c=bool(norm_E < 1.0),
        pass_8d=bool(eta is not None and eta < 0.5),
    )


def tune_droop_slopes(network, topo, epsilon=0.0):
    if epsilon < 0:
        raise ValueError(f"Slope margin must be non-negative, got {epsilon}")
    sums_r = topo.R.sum(axis=0)
    sums_x = topo.X.sum(axis=0)
    alpha_p, alpha_q = [], []
    for ibdg in network.droop_ibdgs:
        den_p = sums_r[ibdg.bus - 1] + epsilon
        den_q = sums_x[ibdg.bus - 1] + epsilon
        if den_p <= 0 or den_q <= 0:
            raise ZeroPathImpedance(
                f"IBDG {ibdg.id}: path impedance sum ({den_p}, {den_q}) is not positive"
            )
        alpha_p.append(1.0 / den_p)
        alpha_q.append(1.0 / den_q)
    return DroopSlopes([ibdg.id for ibdg in network.droop_ibdgs], alpha_p, alpha_q)


def sweep_epsilon(network, grid, topo=None, verbose=False):
    if len(grid) == 0:
        raise ValueError("Epsilon grid is empty")
    topo = topo if topo is not None else build_topology(network)
    rows = []
    for epsilon in tqdm(grid, desc="Sweeping epsilon", disable=not verbose):
        slopes = tune_droop_slopes(network, topo, epsilon)
        matrices = compute_condition_matrices(network, topo, effective_shunts(network, slopes))
        report = check_conditions(matrices)
        rows.append(
            {
                "epsilon": float(epsilon),
                "det_sign": matrices.det_sign,
                "log_abs_det": matrices.log_abs_det,
                "det": matrices.det_sign * np.exp(matrices.log_abs_det),
                "min_D": report.min_D,
                "norm_8a": report.norm_8a,
            }
        )
    return pd.DataFrame(rows)


def neumann_inverse(A, tol=1e-8, max_terms=100000):
    """Truncated sum of A^k approximating (I - A)^-1, with the tail-bound term count."""
    norm = np.linalg.norm(A, "fro")
    if norm >= 1.0:
        raise ValueError(f"Series diverges: ||A||_F = {norm}")
    n_terms = 0
    while norm ** (n_terms + 1) / (1.0 - norm) > tol and n_terms < max_terms:
        n_terms += 1
    total = np.eye(A.shape[0])
    power = np.eye(A.shape[0])
    for _ in range(n_terms):
        power = power @ A
        total = total + power
    return total, n_terms


class ConditionBreak:
    """
    Args:
        max_voltage: uncontrolled power flow at the break injection
        max_voltage_droop: same injection with the droop units acting as
            linear droops around the slack voltage; None without slopes
    """

    def __init__(self, scale, net_injection, report, max_voltage, max_voltage_droop=None):
        self.scale = scale
        self.net_injection = net_injection
        self.report = report
        self.max_voltage = max_voltage
        self.max_voltage_droop = max_voltage_droop

    @property
    def violated(self):
        return self.report.violated

    def to_dict(self):
        return {
            "scale": float(self.scale),
            "net_injection": float(self.net_injection),
            "violated": self.violated,
            "max_voltage": None if self.max_voltage is None else float(self.max_voltage),
            "max_voltage_droop": None if self.max_voltage_droop is None else float(self.max_voltage_droop),
            "report": self.report.to_dict(),
        }


def default_direction(network):
    """Injection proportional to each bus's load share, totalling the installed IBDG rating."""
    p_total = network.load_p.sum()
    q_total = network.load_q.sum()
    pg = sum(ibdg.p_max for ibdg in network.ibdgs)
    qg = sum(ibdg.q_max for ibdg in network.ibdgs)
    dp = network.load_p * (pg / p_total) if p_total > 0 else np.zeros(network.n_line)
    dq = network.load_q * (qg / q_total) if q_total > 0 else np.zeros(network.n_line)
    return dp, dq


def find_condition_break(
    network, direction=None, topo=None, slopes=None, max_scale=64.0, tol=1e-3, verbose=False
):
    """
    Smallest injection scale at which the conditions stop holding, by
    doubling then bisection, with the uncontrolled power flow at that point
    and, given slopes, the droop-regulated one.
    """
    topo = topo if topo is not None else build_topology(network)
    direction = direction if direction is not None else default_direction(network)
    if np.any(np.asarray(direction[0]) < 0) or not np.any(np.asarray(direction[0]) > 0):
        raise ValueError("Injection direction must be non-negative and nonzero")
    shunts = effective_shunts(network, slopes)

    def check_at(scale):
        envelope = flow_envelope(network, topo, scale, direction)
        return check_conditions(compute_condition_matrices(network, topo, shunts, envelope))

    lo, hi = 0.0, None
    report = check_at(lo)
    if report.overall:
        scale = 1.0
        while scale <= max_scale:
            report = check_at(scale)
            if not report.overall:
                hi = scale
                break
            lo = scale
            scale *= 2.0
        if hi is None:
            raise NoBreakFound(f"Conditions still hold at scale {max_scale}")
        while hi - lo > tol * hi:
            mid = 0.5 * (lo + hi)
            if check_at(mid).overall:
                lo = mid
            else:
                hi = mid
        report = check_at(hi)
    else:
        hi = 0.0

    # the scaled injection is active power only
    p_net = network.load_p - hi * np.asarray(direction[0])
    q_net = network.load_q
    max_voltage = _break_voltage(network, topo, p_net, q_net, network.shunt_g, network.shunt_b)
    max_voltage_droop = None
    if slopes is not None:
        # droop consumption alpha (v - v0) splits into a shunt and a constant
        ap, aq = slopes.per_line(network)
        max_voltage_droop = _break_voltage(
            network, topo, p_net - ap * network.v0, q_net - aq * network.v0, *shunts
        )
    if verbose:
        print(f"Conditions break at scale {hi:.4f}: {report.violated}")
    return ConditionBreak(hi, float(-p_net.sum()), report, max_voltage, max_voltage_droop)


def _break_voltage(network, topo, p, q, g, b):
    try:
        state = distflow_sweep(network, topo, p, q, g, b)
    except PowerFlowError as err:
        warnings.warn(f"Power flow at the break point failed: {err}", stacklevel=3)
        return None
    return float(np.sqrt(state.v.max()))
