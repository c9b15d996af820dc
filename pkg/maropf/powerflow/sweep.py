import warnings

import numpy as np

from maropf.droop import clip_to_capability, eval_exact_droop
from maropf.powerflow.state import (
    Diverged,
    NonPositiveVoltage,
    NotConverged,
    PowerFlowState,
    SecurityVerdict,
    UnconvergedState,
    equation_residuals,
)
from maropf.utils import tqdm

GROWTH_WINDOW = 20


def _guard(v, f, residual, history):
    if not (np.all(np.isfinite(v)) and np.all(np.isfinite(f))):
        raise Diverged("Non-finite iterate")
    if np.any(v <= 0):
        raise NonPositiveVoltage(f"Squared voltage dropped to {v.min():.3e}")
    history.append(residual)
    if len(history) > GROWTH_WINDOW:
        window = np.array(history[-GROWTH_WINDOW - 1 :])
        if np.all(np.diff(window) > 0):
            raise Diverged(f"Residual grew for {GROWTH_WINDOW} consecutive steps")


def distflow_sweep(
    network, topo, p, q, g, b, v0=None, tol=1e-12, max_iter=1000, start=None
):
    """
    Backward/forward sweep on the branch flow equations.

    Args:
        p, q: net consumption per bus (load minus generation), line vectors
        g, b: constant-impedance admittance per bus
        start: optional PowerFlowState to warm start from
    """
    v0 = network.v0 if v0 is None else v0
    H = topo.H
    r, x, z2 = topo.r, topo.x, topo.z2
    if start is not None:
        v = start.v_lines.copy()
        f = start.f.copy()
    else:
        v = np.full(topo.n, v0)
        f = np.zeros(topo.n)

    history = []
    for it in range(1, max_iter + 1):
        P = H @ (p + g * v + r * f)
        Q = H @ (q + b * v + x * f)
        f_new = (P ** 2 + Q ** 2) / topo.v_up(v, v0)
        v_new = v0 - H.T @ (2.0 * (r * P + x * Q) - z2 * f_new)
        change = max(np.max(np.abs(v_new - v), initial=0.0), np.max(np.abs(f_new - f), initial=0.0))
        v, f = v_new, f_new
        _guard(v, f, change, history)
        if change <= tol:
            break
    else:
        raise NotConverged(f"Sweep did not converge in {max_iter} iterations (change {change:.3e})")

    P = H @ (p + g * v + r * f)
    Q = H @ (q + b * v + x * f)
    state = PowerFlowState(np.concatenate([[v0], v]), f, P, Q, True, it)
    state.residual = equation_residuals(topo, state, p, q, g, b)
    return state


def adhoc_iteration(v_hat, D, p, q, g, b, topo, start, eps_stop=1e-10, max_iter=1000):
    """
    Fixed point of f <- |S|^2 / v_up, v <- v_hat - D f, S <- H(s + y v + z f)
    started from an optimizer point. v_hat and D must come from the same
    shunts g, b.
    """
    v0 = start.v[0]
    H = topo.H
    v = start.v_lines.copy()
    f = start.f.copy()
    P = start.P.copy()
    Q = start.Q.copy()

    history = []
    for it in range(1, max_iter + 1):
        f_new = (P ** 2 + Q ** 2) / topo.v_up(v, v0)
        v = v_hat - D @ f_new
        P = H @ (p + g * v + topo.r * f_new)
        Q = H @ (q + b * v + topo.x * f_new)
        change = np.max(np.abs(f_new - f), initial=0.0)
        f = f_new
        _guard(v, f, change, history)
        if change <= eps_stop:
            break
    else:
        raise NotConverged(f"Ad-hoc iteration stalled at change {change:.3e}")

    state = PowerFlowState(np.concatenate([[v0], v]), f, P, Q, True, it)
    state.residual = equation_residuals(topo, state, p, q, g, b)
    return state


def ibdg_injections(network, curves, p_ava, V):
    """
    (p, q) of every unit at bus voltage magnitudes V (slack first).
    Units without a curve, or non-dispatchable, inject p_ava at unity power
    factor; units with no available power are offline.
    """
    p = np.zeros(len(network.ibdgs))
    q = np.zeros(len(network.ibdgs))
    for j, ibdg in enumerate(network.ibdgs):
        if p_ava[j] <= 0:
            continue
        curve = curves.get(ibdg.id) if ibdg.dispatchable else None
        if curve is None:
            p[j], q[j] = clip_to_capability(p_ava[j], 0.0, ibdg)
            continue
        pg, qg = eval_exact_droop(curve, V[ibdg.bus], p_ava[j])
        p[j], q[j] = clip_to_capability(pg, qg, ibdg)
    return p, q


def exact_droop_powerflow(
    network,
    topo,
    curves,
    p_ava,
    loads=None,
    tol=1e-8,
    max_outer=200,
    relax_after=20,
    relaxation=0.5,
):
    """
    Power flow with every inverter following its exact droop curve.

    Args:
        curves: dict of unit id -> ExactDroopCurve
        p_ava: available power per unit (aligned with network.ibdgs), p.u.
        loads: (p, q) per bus, defaults to the case loads
        relax_after: passes of plain re-evaluation before injections are
            blended with `relaxation` of the new target
    """
    curves = curves if curves is not None else {}
    p_ava = np.asarray(p_ava, dtype=float)
    p_load, q_load = loads if loads is not None else (network.load_p, network.load_q)
    inc = network.incidence()
    g, b = network.shunt_g, network.shunt_b

    V = np.full(network.n_bus, np.sqrt(network.v0))
    inj_p, inj_q = ibdg_injections(network, curves, p_ava, V)
    state = None
    relaxed_at = None
    for outer in range(1, max_outer + 1):
        state = distflow_sweep(
            network, topo, p_load - inc @ inj_p, q_load - inc @ inj_q, g, b, start=state
        )
        V_new = state.V
        dV = np.max(np.abs(V_new - V))
        V = V_new
        target_p, target_q = ibdg_injections(network, curves, p_ava, V)
        d_inj = max(
            np.max(np.abs(target_p - inj_p), initial=0.0),
            np.max(np.abs(target_q - inj_q), initial=0.0),
        )
        if dV <= tol and d_inj <= tol:
            break
        # plain re-evaluation for the first relax_after passes
        if relaxed_at is None and outer >= relax_after:
            relaxed_at = outer
            warnings.warn(
                f"Droop outer loop still moving after {outer} passes (dV {dV:.3e}); relaxing injections",
                stacklevel=2,
            )
        if relaxed_at is not None:
            inj_p = relaxation * target_p + (1.0 - relaxation) * inj_p
            inj_q = relaxation * target_q + (1.0 - relaxation) * inj_q
        else:
            inj_p, inj_q = target_p, target_q
    else:
        raise NotConverged(f"Droop loop did not settle in {max_outer} passes (dV {dV:.3e})")

    state.iterations = outer
    state.relaxed_at = relaxed_at
    state.injections = {
        ibdg.id: (float(p_), float(q_)) for ibdg, p_, q_ in zip(network.ibdgs, inj_p, inj_q)
    }
    return state


def simulate_horizon(network, topo, horizon, curves, verbose=False, **kwargs):
    """Exact droop power flow at every step of the horizon."""
    states = []
    for t in tqdm(range(horizon.T), desc="Simulating horizon", disable=not verbose):
        states.append(
            exact_droop_powerflow(
                network, topo, curves, horizon.p_ava(t), loads=horizon.loads(network, t), **kwargs
            )
        )
    return states


def verify_security(states, network, tol=1e-6):
    """Checks every state against bus voltage and line current limits."""
    v_min = network.v_min
    v_max = network.v_max
    i_max = network.i_max
    violations = []
    worst_hi, worst_lo, worst_ratio = -np.inf, np.inf, 0.0
    for t, state in enumerate(states):
        if not state.converged:
            raise UnconvergedState(f"State at step {t} did not converge")
        v = state.v_lines
        worst_hi = max(worst_hi, float(np.sqrt(state.v.max())))
        worst_lo = min(worst_lo, float(np.sqrt(state.v.min())))
        if len(state.f):
            worst_ratio = max(worst_ratio, float(np.max(state.f / i_max)))
        for i in np.flatnonzero(v > v_max + tol):
            violations.append(("v_hi", int(i + 1), t, float(np.sqrt(v[i]) - np.sqrt(v_max[i]))))
        for i in np.flatnonzero(v < v_min - tol):
            violations.append(("v_lo", int(i + 1), t, float(np.sqrt(v_min[i]) - np.sqrt(v[i]))))
        for i in np.flatnonzero(state.f > i_max + tol):
            violations.append(("f", int(i + 1), t, float(state.f[i] - i_max[i])))
    if not states:
        worst_hi = worst_lo = float(np.sqrt(network.v0))
    return SecurityVerdict(worst_hi, worst_lo, worst_ratio, violations)
