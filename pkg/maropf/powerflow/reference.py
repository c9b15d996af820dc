"""
Independent power-flow solvers used to cross-check the sweep: exact
elimination for networks of up to three buses and a polar Newton solve of
the bus-injection equations.
"""
import numpy as np
from numpy.polynomial import Polynomial

from maropf.powerflow.state import NoRealSolution, NotConverged, PowerFlowState
from maropf.powerflow.sweep import ibdg_injections


def _walk_up(path, v_end, p, q, g, b, r, x):
    """
    Given the receiving voltage at the end of `path` (line indices, root
    first), returns the sending voltage at its start and per-line results.
    """
    v_recv = v_end
    out = {}
    P_in, Q_in = 0.0, 0.0
    for l in reversed(path):
        i = l - 1
        pr = p[i] + g[i] * v_recv + P_in
        qr = q[i] + b[i] * v_recv + Q_in
        f = (pr ** 2 + qr ** 2) / v_recv
        v_send = v_recv + 2.0 * (r[i] * pr + x[i] * qr) + (r[i] ** 2 + x[i] ** 2) * f
        out[l] = (v_recv, f, pr + r[i] * f, qr + x[i] * f)
        P_in, Q_in = pr + r[i] * f, qr + x[i] * f
        v_recv = v_send
    return v_recv, out


def slack_polynomial(path, v0, p, q, g, b, r, x):
    """
    Numerator of v_send(s) - v0 along `path`, s the squared voltage at its
    end. Every quantity is a polynomial in s over a shared denominator.
    """
    s = Polynomial([0.0, 1.0])
    Vn, d = s, Polynomial([1.0])
    Pn = Qn = Polynomial([0.0])
    for l in reversed(path):
        i = l - 1
        prn = p[i] * d + g[i] * Vn + Pn
        qrn = q[i] * d + b[i] * Vn + Qn
        flow = prn ** 2 + qrn ** 2
        Vn, Pn, Qn, d = (
            Vn ** 2 + 2.0 * (r[i] * prn + x[i] * qrn) * Vn + (r[i] ** 2 + x[i] ** 2) * flow,
            prn * Vn + r[i] * flow,
            qrn * Vn + x[i] * flow,
            d * Vn,
        )
    return (Vn - v0 * d).trim()


def _solve_path(path, v0, p, q, g, b, r, x, imag_tol=1e-7):
    poly = slack_polynomial(path, v0, p, q, g, b, r, x)
    candidates = []
    for root in poly.roots():
        if abs(root.imag) > imag_tol * max(1.0, abs(root)) or root.real <= 0:
            continue
        s = root.real
        deriv = poly.deriv()
        for _ in range(3):
            slope = deriv(s)
            if slope == 0:
                break
            s -= poly(s) / slope
        v_send, out = _walk_up(path, s, p, q, g, b, r, x)
        if all(values[0] > 0 for values in out.values()):
            candidates.append((s, out))
    if not candidates:
        raise NoRealSolution(f"No voltage solves the path {path}")
    # largest end voltage is the high-voltage branch
    return max(candidates, key=lambda item: item[0])[1]


def brute_force_small(network, topo, p, q, g=None, b=None):
    """
    Exact power flow on a network with at most three buses, by eliminating
    each slack-to-leaf path into one polynomial in the leaf voltage.

    Args:
        p, q: net consumption per bus, line vectors
    """
    if network.n_bus > 3:
        raise ValueError(f"Closed-form solver handles up to 3 buses, got {network.n_bus}")
    n = topo.n
    g = np.zeros(n) if g is None else np.asarray(g, dtype=float)
    b = np.zeros(n) if b is None else np.asarray(b, dtype=float)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    r, x, v0 = topo.r, topo.x, network.v0

    v = np.zeros(n)
    f = np.zeros(n)
    P = np.zeros(n)
    Q = np.zeros(n)
    # every subtree under the slack is a path when there are at most 3 buses
    for first in topo.children[0]:
        path = [first]
        while topo.children[path[-1]]:
            path.append(topo.children[path[-1]][0])
        for l, (v_l, f_l, P_l, Q_l) in _solve_path(path, v0, p, q, g, b, r, x).items():
            v[l - 1], f[l - 1], P[l - 1], Q[l - 1] = v_l, f_l, P_l, Q_l
    return PowerFlowState(np.concatenate([[v0], v]), f, P, Q, True, 0, 0.0)


def build_ybus(network):
    """Bus admittance matrix of the series branches only."""
    n_bus = network.n_bus
    Y = np.zeros((n_bus, n_bus), dtype=complex)
    for line in network.lines:
        z = complex(line.r, line.x)
        if z == 0:
            raise ValueError(f"Line {line.id} has zero impedance")
        y = 1.0 / z
        Y[line.up, line.up] += y
        Y[line.id, line.id] += y
        Y[line.up, line.id] -= y
        Y[line.id, line.up] -= y
    return Y


def _dsbus_dv(Y, V):
    Ibus = Y @ V
    Vnorm = V / np.abs(V)
    dS_dVm = np.diag(V) @ np.conj(Y @ np.diag(Vnorm)) + np.conj(np.diag(Ibus)) @ np.diag(Vnorm)
    dS_dVa = 1j * np.diag(V) @ np.conj(np.diag(Ibus) - Y @ np.diag(V))
    return dS_dVm, dS_dVa


def newton_powerflow(
    network, curves=None, p_ava=None, loads=None, tol=1e-10, max_iter=50, fd_step=1e-7
):
    """
    Polar Newton-Raphson on the bus-injection equations with droop
    injections depending on the local voltage magnitude.
    """
    curves = curves if curves is not None else {}
    p_ava = np.zeros(len(network.ibdgs)) if p_ava is None else np.asarray(p_ava, dtype=float)
    p_load, q_load = loads if loads is not None else (network.load_p, network.load_q)
    shunt = np.concatenate([[0.0], network.shunt_g + 1j * network.shunt_b])
    demand = np.concatenate([[0.0], p_load + 1j * q_load])
    inc = np.zeros((network.n_bus, len(network.ibdgs)))
    for j, ibdg in enumerate(network.ibdgs):
        inc[ibdg.bus, j] = 1.0

    def injection(Vm):
        pg, qg = ibdg_injections(network, curves, p_ava, Vm)
        return inc @ (pg + 1j * qg) - demand - shunt * Vm ** 2

    def injection_slope(Vm):
        slope = np.zeros(network.n_bus, dtype=complex)
        for k in range(1, network.n_bus):
            hi, lo = Vm.copy(), Vm.copy()
            hi[k] += fd_step
            lo[k] -= fd_step
            slope[k] = (injection(hi)[k] - injection(lo)[k]) / (2.0 * fd_step)
        return slope

    Y = build_ybus(network)
    Vm = np.full(network.n_bus, np.sqrt(network.v0))
    Va = np.zeros(network.n_bus)
    pq = np.arange(1, network.n_bus)
    for it in range(max_iter + 1):
        V = Vm * np.exp(1j * Va)
        mismatch = V * np.conj(Y @ V) - injection(Vm)
        F = np.concatenate([mismatch[pq].real, mismatch[pq].imag])
        if np.max(np.abs(F), initial=0.0) < tol:
            break
        if it == max_iter:
            raise NotConverged(f"Newton stopped at mismatch {np.max(np.abs(F)):.3e}")
        dS_dVm, dS_dVa = _dsbus_dv(Y, V)
        dS_dVm = dS_dVm - np.diag(injection_slope(Vm))
        J = np.block(
            [
                [dS_dVa[np.ix_(pq, pq)].real, dS_dVm[np.ix_(pq, pq)].real],
                [dS_dVa[np.ix_(pq, pq)].imag, dS_dVm[np.ix_(pq, pq)].imag],
            ]
        )
        dx = np.linalg.solve(J, -F)
        Va[pq] += dx[: len(pq)]
        Vm[pq] += dx[len(pq) :]

    V = Vm * np.exp(1j * Va)
    f = np.zeros(network.n_line)
    P = np.zeros(network.n_line)
    Q = np.zeros(network.n_line)
    for line in network.lines:
        current = (V[line.up] - V[line.id]) / complex(line.r, line.x)
        S = V[line.up] * np.conj(current)
        f[line.id - 1] = abs(current) ** 2
        P[line.id - 1] = S.real
        Q[line.id - 1] = S.imag
    return PowerFlowState(Vm ** 2, f, P, Q, True, it, float(np.max(np.abs(F), initial=0.0)))
