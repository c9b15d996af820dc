import numpy as np

from maropf.utils import MaropfError


class PowerFlowError(MaropfError, RuntimeError):
    pass


class Diverged(PowerFlowError):
    pass


class NonPositiveVoltage(PowerFlowError):
    pass


class NotConverged(PowerFlowError):
    pass


class UnconvergedState(PowerFlowError):
    pass


class NoRealSolution(PowerFlowError):
    pass


class PowerFlowState:
    """
    Args:
        v: squared voltage of every bus, slack first
        f: squared current per line
        P, Q: sending-end flows per line
    """

    def __init__(
        self, v, f, P, Q, converged=True, iterations=0, residual=0.0, injections=None
    ):
        self.v = np.asarray(v, dtype=float)
        self.f = np.asarray(f, dtype=float)
        self.P = np.asarray(P, dtype=float)
        self.Q = np.asarray(Q, dtype=float)
        self.converged = converged
        self.iterations = iterations
        self.residual = residual
        # per-IBDG (p, q) the state was solved with
        self.injections = injections
        # droop loop pass at which injections started being relaxed
        self.relaxed_at = None

    @property
    def v_lines(self):
        return self.v[1:]

    @property
    def V(self):
        return np.sqrt(self.v)

    def to_dict(self):
        return {
            "v": self.v.tolist(),
            "f": self.f.tolist(),
            "P": self.P.tolist(),
            "Q": self.Q.tolist(),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "residual": float(self.residual),
        }


class SecurityVerdict:
    def __init__(self, worst_v_hi, worst_v_lo, worst_current_ratio, violations):
        self.worst_v_hi = worst_v_hi
        self.worst_v_lo = worst_v_lo
        self.worst_current_ratio = worst_current_ratio
        self.violations = violations

    @property
    def ok(self):
        return not self.violations

    def to_dict(self):
        return {
            "worst_v_hi": float(self.worst_v_hi),
            "worst_v_lo": float(self.worst_v_lo),
            "worst_current_ratio": float(self.worst_current_ratio),
            "violations": [
                [quantity, int(index), int(t), float(amount)]
                for quantity, index, t, amount in self.violations
            ],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(
            data["worst_v_hi"],
            data["worst_v_lo"],
            data["worst_current_ratio"],
            [tuple(v) for v in data["violations"]],
        )


def equation_residuals(topo, state, p, q, g, b):
    """Largest violation of the branch flow equations at a state."""
    v = state.v_lines
    v_up = topo.v_up(v, state.v[0])
    kcl_p = state.P - topo.H @ (p + g * v + topo.r * state.f)
    kcl_q = state.Q - topo.H @ (q + b * v + topo.x * state.f)
    kvl = v - v_up + 2.0 * (topo.r * state.P + topo.x * state.Q) - topo.z2 * state.f
    cone = state.f * v_up - (state.P ** 2 + state.Q ** 2)
    return float(np.max(np.abs(np.concatenate([kcl_p, kcl_q, kvl, cone, [0.0]]))))
