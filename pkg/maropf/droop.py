"""
Droop curves of inverter-based generators.

The linear model works in squared-voltage coordinates,

    q = q_g0 - alpha_q * (v - v0q)
    p = p_ava - y * alpha_p * (v - v0p),   y = 1 iff v > v0p

while the inverter implements the same curves against the measured voltage
magnitude V. The two are tied by a first-order expansion of v = V^2 around
taylor_v0, under which the linear model is a lower bound of the exact one.
"""
import numpy as np

from maropf.utils import MaropfError

ACTIVATION_TOL = 1e-9


class InconsistentActivation(MaropfError, ValueError):
    pass


class DroopParameters:
    """
    Args:
        alpha_p, alpha_q: slopes, p.u. power per p.u.^2 voltage
        v0p, v0q: squared voltage references
        q_g0: reactive reference, p.u.
    """

    def __init__(self, alpha_p, alpha_q, v0p, v0q, q_g0):
        if np.any(np.asarray(alpha_p) < 0) or np.any(np.asarray(alpha_q) < 0):
            raise ValueError(f"Droop slopes must be non-negative: {alpha_p}, {alpha_q}")
        self.alpha_p = alpha_p
        self.alpha_q = alpha_q
        self.v0p = v0p
        self.v0q = v0q
        self.q_g0 = q_g0

    def to_dict(self):
        return {
            "alpha_p": float(self.alpha_p),
            "alpha_q": float(self.alpha_q),
            "v0p": float(self.v0p),
            "v0q": float(self.v0q),
            "q_g0": float(self.q_g0),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(data["alpha_p"], data["alpha_q"], data["v0p"], data["v0q"], data["q_g0"])


class ExactDroopCurve:
    def __init__(self, alpha_p_star, alpha_q_star, vref_p_star, vref_q_star, q_g0, taylor_v0):
        self.alpha_p_star = alpha_p_star
        self.alpha_q_star = alpha_q_star
        self.vref_p_star = vref_p_star
        self.vref_q_star = vref_q_star
        self.q_g0 = q_g0
        self.taylor_v0 = taylor_v0

    def to_dict(self):
        return {
            "alpha_p_star": float(self.alpha_p_star),
            "alpha_q_star": float(self.alpha_q_star),
            "vref_p_star": float(self.vref_p_star),
            "vref_q_star": float(self.vref_q_star),
            "q_g0": float(self.q_g0),
            "taylor_v0": float(self.taylor_v0),
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["alpha_p_star"],
            data["alpha_q_star"],
            data["vref_p_star"],
            data["vref_q_star"],
            data["q_g0"],
            data["taylor_v0"],
        )


def approx_to_exact(params, taylor_v0):
    if np.any(np.asarray(taylor_v0) <= 0):
        raise ValueError(f"Expansion point must be positive, got {taylor_v0}")
    root = np.sqrt(taylor_v0)
    return ExactDroopCurve(
        alpha_p_star=2.0 * params.alpha_p * root,
        alpha_q_star=2.0 * params.alpha_q * root,
        vref_p_star=(params.v0p + taylor_v0) / (2.0 * root),
        vref_q_star=(params.v0q + taylor_v0) / (2.0 * root),
        q_g0=params.q_g0,
        taylor_v0=taylor_v0,
    )


def exact_to_approx(curve):
    root = np.sqrt(curve.taylor_v0)
    return DroopParameters(
        alpha_p=curve.alpha_p_star / (2.0 * root),
        alpha_q=curve.alpha_q_star / (2.0 * root),
        v0p=2.0 * root * curve.vref_p_star - curve.taylor_v0,
        v0q=2.0 * root * curve.vref_q_star - curve.taylor_v0,
        q_g0=curve.q_g0,
    )


def eval_exact_droop(curve, V, p_ava):
    """Inverter output at voltage magnitude V, before capability clipping."""
    V = np.asarray(V, dtype=float)
    q_g = curve.q_g0 - curve.alpha_q_star * (V - curve.vref_q_star)
    p_g = np.where(
        V <= curve.vref_p_star,
        p_ava,
        p_ava - curve.alpha_p_star * (V - curve.vref_p_star),
    )
    return p_g, q_g


def eval_approx_droop(params, v, p_ava, y):
    if y and v < params.v0p - ACTIVATION_TOL:
        raise InconsistentActivation(f"y=1 but v={v} below v0p={params.v0p}")
    if not y and v > params.v0p + ACTIVATION_TOL:
        raise InconsistentActivation(f"y=0 but v={v} above v0p={params.v0p}")
    q_g = params.q_g0 - params.alpha_q * (v - params.v0q)
    p_g = p_ava - y * params.alpha_p * (v - params.v0p)
    return p_g, q_g


def activation(params, v):
    return 1 if v > params.v0p else 0


def approximation_error(params, curve, V):
    """(dp, dq) = linear model at V^2 minus exact curve at V."""
    p_exact, q_exact = eval_exact_droop(curve, V, 0.0)
    v = V ** 2
    p_approx, q_approx = eval_approx_droop(params, v, 0.0, activation(params, v))
    return p_approx - p_exact, q_approx - q_exact


def constant_impedance_equivalent(params, y, p_ava):
    """
    Splits the linear droop into a constant-power injection and a shunt
    admittance consuming (g + jb) * v.
    """
    power = complex(
        p_ava + y * params.alpha_p * params.v0p,
        params.q_g0 + params.alpha_q * params.v0q,
    )
    admittance = complex(y * params.alpha_p, params.alpha_q)
    return power, admittance


def clip_to_capability(p, q, ibdg):
    """Power-factor wedge, then apparent-power cap keeping reactive power."""
    p = float(np.clip(p, 0.0, ibdg.p_max))
    q = float(np.clip(q, ibdg.q_min, ibdg.q_max))
    slope = ibdg.pf_slope
    q = float(np.clip(q, -slope * p, slope * p))
    if p ** 2 + q ** 2 > ibdg.s_max ** 2:
        q = float(np.clip(q, -ibdg.s_max, ibdg.s_max))
        p = float(np.sqrt(max(ibdg.s_max ** 2 - q ** 2, 0.0)))
        q = float(np.clip(q, -slope * p, slope * p))
    return p, q
